"""Spectral machinery on the periodic 3-torus [0, L)^3.

Fields are stored as unitary-normalized DFT coefficients in standard FFT
ordering (``numpy.fft.fftfreq``), so Plancherel holds literally:

    sum_j |f_j|^2 == sum_k |f_k|^2,    int |f|^2 dx == dV * sum_k |f_k|^2

with ``dV = (L/n)**3``.  Nonlinear products are evaluated on a zero-padded
grid and truncated back, so products of band-limited fields are alias-free.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import scipy.fft as sfft

_AXES = (-3, -2, -1)


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Grid:
    """Uniform grid with ``n`` points per axis on a box of side ``L``."""

    n: int
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n % 2:
            raise ValueError(f"n must be an even integer, got {self.n}")
        if self.n < 8:
            raise ValueError(f"n must be >= 8, got {self.n}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "L", float(self.L))

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n,) * 3

    @property
    def dx(self) -> float:
        return self.L / self.n

    @property
    def cell_volume(self) -> float:
        return self.dx**3

    @property
    def volume(self) -> float:
        return self.L**3

    @cached_property
    def k1d(self) -> np.ndarray:
        """Integer wave indices -n/2..n/2-1 in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).round().astype(int)

    @cached_property
    def xi1d(self) -> np.ndarray:
        return (2 * np.pi / self.L) * self.k1d

    @cached_property
    def xi(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Wavevector components, broadcastable to the full grid."""
        k = self.xi1d
        return k[:, None, None], k[None, :, None], k[None, None, :]

    @cached_property
    def xi2(self) -> np.ndarray:
        a, b, c = self.xi
        return a**2 + b**2 + c**2

    @cached_property
    def xi_abs(self) -> np.ndarray:
        return np.sqrt(self.xi2)

    @cached_property
    def nyquist(self) -> np.ndarray:
        """Boolean mask of modes with some index equal to -n/2."""
        m = self.k1d == -self.n // 2
        return m[:, None, None] | m[None, :, None] | m[None, None, :]

    @cached_property
    def x1d(self) -> np.ndarray:
        return np.arange(self.n) * self.dx

    def mesh(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        x = self.x1d
        return x[:, None, None], x[None, :, None], x[None, None, :]

    @cached_property
    def _padders(self) -> dict:
        return {}

    def padder(self, factor: float) -> "Padder":
        m = int(np.ceil(factor * self.n))
        if m not in self._padders:
            self._padders[m] = Padder(self, m)
        return self._padders[m]


def make_grid(n: int, L: float) -> Grid:
    return Grid(n, L)


class Padder:
    """Moves coefficient arrays between the base grid and an ``m``-point grid."""

    def __init__(self, grid: Grid, m: int):
        if m < grid.n:
            raise ValueError("padded size must not be smaller than the grid")
        self.grid = grid
        self.m = m
        idx = grid.k1d % m
        self._ix = (Ellipsis,) + np.ix_(idx, idx, idx)
        self._scale = (m / grid.n) ** 1.5

    def lift(self, coeffs: np.ndarray) -> np.ndarray:
        """Physical values on the padded grid (batched over leading axes)."""
        out = np.zeros(coeffs.shape[:-3] + (self.m,) * 3, dtype=complex)
        out[self._ix] = coeffs * self._scale
        return sfft.ifftn(out, axes=_AXES, norm="ortho", overwrite_x=True)

    def drop(self, values: np.ndarray) -> np.ndarray:
        """Base-grid coefficients of padded physical values, Nyquist zeroed."""
        full = sfft.fftn(values, axes=_AXES, norm="ortho")
        out = full[self._ix] / self._scale
        out[..., self.grid.nyquist] = 0.0
        return out

    # Real-valued fields: half-spectrum transforms at roughly half the cost.

    @cached_property
    def _half_ix(self):
        n, m = self.grid.n, self.m
        k = self.grid.k1d
        pos = np.arange(n // 2)
        direct = (Ellipsis,) + np.ix_(k % m, k % m, pos)
        mirror = (Ellipsis,) + np.ix_((-k) % m, (-k) % m, pos[1:][::-1])
        return direct, mirror

    def lift_real(self, coeffs: np.ndarray) -> np.ndarray:
        """Like :meth:`lift` for conjugate-symmetric coefficients; returns real values."""
        n, m = self.grid.n, self.m
        half = np.zeros(coeffs.shape[:-3] + (m, m, m // 2 + 1), dtype=complex)
        direct, _ = self._half_ix
        half[direct] = coeffs[..., : n // 2] * self._scale
        return sfft.irfftn(half, s=(m,) * 3, axes=_AXES, norm="ortho", overwrite_x=True)

    def drop_real(self, values: np.ndarray) -> np.ndarray:
        """Like :meth:`drop` for real padded values."""
        n = self.grid.n
        half = sfft.rfftn(values, axes=_AXES, norm="ortho")
        direct, mirror = self._half_ix
        out = np.empty(values.shape[:-3] + (n,) * 3, dtype=complex)
        out[..., : n // 2] = half[direct]
        out[..., n // 2 + 1:] = np.conj(half[mirror])
        out /= self._scale
        out[..., self.grid.nyquist] = 0.0
        return out


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Scalar field on a grid, held as Fourier coefficients.

    ``real`` marks fields whose physical values are real; their coefficients
    are conjugate symmetric.  Instances are treated as immutable.
    """

    grid: Grid
    coeffs: np.ndarray
    real: bool = False

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != self.grid.shape:
            raise ValueError(f"coefficient shape {c.shape} does not match grid {self.grid.shape}")
        object.__setattr__(self, "coeffs", c)

    def physical(self) -> np.ndarray:
        return to_physical(self)

    def _new(self, coeffs, real=None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real if real is None else real)

    def __add__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self, other)
        return self._new(self.coeffs + other.coeffs, self.real and other.real)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        _check_grid(self, other)
        return self._new(self.coeffs - other.coeffs, self.real and other.real)

    def __neg__(self) -> "SpectralField":
        return self._new(-self.coeffs)

    def __mul__(self, scalar) -> "SpectralField":
        if isinstance(scalar, (SpectralField, VectorField)):
            raise TypeError("use dealiased_product for field products")
        real = self.real and np.isreal(scalar)
        return self._new(self.coeffs * scalar, real)

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "SpectralField":
        return self * (1.0 / scalar)

    @property
    def mean_coefficient(self) -> complex:
        return complex(self.coeffs[0, 0, 0])

    def conj(self) -> "SpectralField":
        return SpectralField(self.grid, _conj_coeffs(self.coeffs), self.real)


@dataclass(frozen=True, eq=False)
class VectorField:
    """Real three-component field; ``coeffs`` has shape ``(3, n, n, n)``."""

    grid: Grid
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.shape != (3,) + self.grid.shape:
            raise ValueError(f"vector coefficient shape {c.shape} does not match grid")
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zeros(cls, grid: Grid) -> "VectorField":
        return cls(grid, np.zeros((3,) + grid.shape, dtype=complex))

    @classmethod
    def from_components(cls, comps: Sequence[SpectralField]) -> "VectorField":
        grid = comps[0].grid
        return cls(grid, np.stack([f.coeffs for f in comps]))

    @property
    def components(self) -> tuple[SpectralField, SpectralField, SpectralField]:
        return tuple(SpectralField(self.grid, c, True) for c in self.coeffs)

    def physical(self) -> np.ndarray:
        return sfft.ifftn(self.coeffs, axes=_AXES, norm="ortho").real

    def __add__(self, other: "VectorField") -> "VectorField":
        _check_grid(self, other)
        return VectorField(self.grid, self.coeffs + other.coeffs)

    def __sub__(self, other: "VectorField") -> "VectorField":
        _check_grid(self, other)
        return VectorField(self.grid, self.coeffs - other.coeffs)

    def __neg__(self) -> "VectorField":
        return VectorField(self.grid, -self.coeffs)

    def __mul__(self, scalar) -> "VectorField":
        if not np.isreal(scalar):
            raise ValueError("vector fields are real-valued; scalar must be real")
        return VectorField(self.grid, self.coeffs * float(np.real(scalar)))

    __rmul__ = __mul__


def _check_grid(a, b):
    if a.grid != b.grid:
        raise ValueError("fields live on different grids")


def _conj_coeffs(c: np.ndarray) -> np.ndarray:
    """Coefficients of the complex conjugate: conj(c(-k))."""
    flipped = np.flip(c, axis=_AXES)
    return np.conj(np.roll(flipped, 1, axis=_AXES))


def zero_field(grid: Grid, real: bool = True) -> SpectralField:
    return SpectralField(grid, np.zeros(grid.shape, dtype=complex), real)


def to_spectral(samples: np.ndarray, grid: Grid, real: bool | None = None) -> SpectralField:
    """Unitary forward transform of physical samples.

    The transform is exact (no mode is dropped), so ``to_physical`` inverts it
    to roundoff.  Use :func:`band_limit` to remove Nyquist content.
    """
    samples = np.asarray(samples)
    if samples.shape != grid.shape:
        raise ValueError(f"sample shape {samples.shape} does not match grid {grid.shape}")
    if real is None:
        real = not np.iscomplexobj(samples)
    return SpectralField(grid, sfft.fftn(samples, norm="ortho"), real)


def to_physical(f: SpectralField) -> np.ndarray:
    values = sfft.ifftn(f.coeffs, norm="ortho")
    return values.real if f.real else values


def band_limit(f):
    """Copy of ``f`` with the Nyquist modes set to zero."""
    c = f.coeffs.copy()
    c[..., f.grid.nyquist] = 0.0
    if isinstance(f, VectorField):
        return VectorField(f.grid, c)
    return SpectralField(f.grid, c, f.real)


def vector_from_physical(values: np.ndarray, grid: Grid) -> VectorField:
    values = np.asarray(values, dtype=float)
    if values.shape != (3,) + grid.shape:
        raise ValueError("vector samples must have shape (3, n, n, n)")
    return VectorField(grid, sfft.fftn(values, axes=_AXES, norm="ortho"))


# ---------------------------------------------------------------------------
# symbols and multipliers
# ---------------------------------------------------------------------------


def _check_c(c):
    if not c > 0:
        raise ValueError(f"light speed must be positive, got {c}")


def symbol_M(xi, c: float):
    """sqrt(c^4 + c^2 |xi|^2); ``xi`` is the magnitude |xi|."""
    _check_c(c)
    xi = np.asarray(xi, dtype=float)
    return c * np.sqrt(c * c + xi * xi)


def symbol_hc(xi, c: float):
    """Symbol of M - c^2 in the cancellation-free form |xi|^2 / (1 + sqrt(1 + |xi|^2/c^2))."""
    _check_c(c)
    xi = np.asarray(xi, dtype=float)
    return hc_from_xi2(xi * xi, c)


def hc_from_xi2(xi2, c: float):
    return xi2 / (1.0 + np.sqrt(1.0 + xi2 / (c * c)))


def chi(r):
    """Radial cutoff: 1 on r <= 1, cos^2(pi (r-1)/2) on 1 < r < 2, 0 beyond."""
    r = np.asarray(r, dtype=float)
    mid = np.cos(0.5 * np.pi * (np.clip(r, 1.0, 2.0) - 1.0)) ** 2
    return np.where(r <= 1.0, 1.0, np.where(r >= 2.0, 0.0, mid))


@dataclass(frozen=True)
class Multiplier:
    """Fourier multiplier ``m(xi)`` evaluated lazily on a grid.

    ``even`` means m(-xi) == m(xi); ``real_valued`` means m is real.  Both
    together preserve reality of the operand.
    """

    descriptor: str
    fn: Callable[[Grid], np.ndarray] = field(repr=False)
    even: bool = True
    real_valued: bool = True
    singular_power: float = 0.0

    def symbol(self, grid: Grid) -> np.ndarray:
        return np.broadcast_to(self.fn(grid), grid.shape)

    def __mul__(self, other: "Multiplier") -> "Multiplier":
        return Multiplier(
            f"({self.descriptor})*({other.descriptor})",
            lambda g: self.fn(g) * other.fn(g),
            self.even and other.even,
            self.real_valued and other.real_valued,
            min(self.singular_power, other.singular_power),
        )


def _safe_inverse(values: np.ndarray, zero_value: float = 0.0) -> np.ndarray:
    out = np.full(values.shape, zero_value, dtype=float)
    np.divide(1.0, values, out=out, where=values != 0)
    return out


def mult_M(c: float) -> Multiplier:
    _check_c(c)
    return Multiplier("M", lambda g: c * np.sqrt(c * c + g.xi2))


def mult_M_inv(c: float) -> Multiplier:
    _check_c(c)
    return Multiplier("M^-1", lambda g: 1.0 / (c * np.sqrt(c * c + g.xi2)))


def mult_hc(c: float) -> Multiplier:
    _check_c(c)
    return Multiplier("M-c^2", lambda g: hc_from_xi2(g.xi2, c))


def mult_abs_D(s: float) -> Multiplier:
    def fn(g):
        if s >= 0:
            return g.xi2 ** (0.5 * s)
        out = np.zeros(g.shape)
        np.power(g.xi2, 0.5 * s, out=out, where=g.xi2 > 0)
        return out

    return Multiplier(f"|D|^{s}", fn, singular_power=min(s, 0.0))


def mult_bessel(s: float) -> Multiplier:
    return Multiplier(f"(1+|xi|^2)^{s}/2", lambda g: (1.0 + g.xi2) ** (0.5 * s))


def mult_inv_laplacian() -> Multiplier:
    """Delta^{-1} with the zero mode annihilated."""
    return Multiplier("Delta^-1", lambda g: -_safe_inverse(g.xi2))


def mult_laplacian() -> Multiplier:
    return Multiplier("Delta", lambda g: -g.xi2)


def mult_low_pass(c: float) -> Multiplier:
    _check_c(c)
    return Multiplier("chi(xi/c)", lambda g: chi(g.xi_abs / c))


def mult_U(t: float, sign: int, c: float) -> Multiplier:
    """exp(-/+ i t h_c(xi)), the propagator of i d_t = +/-(M - c^2)."""
    _check_c(c)
    s = _sign(sign)
    return Multiplier(f"exp({'-' if s > 0 else '+'}it h_c)",
                      lambda g: np.exp(-1j * s * t * hc_from_xi2(g.xi2, c)), real_valued=False)


def mult_V(t: float, sign: int) -> Multiplier:
    """exp(-/+ i t |xi|^2/2), the symbol of exp(+/- i t Delta/2)."""
    s = _sign(sign)
    return Multiplier(f"exp({'-' if s > 0 else '+'}it|xi|^2/2)",
                      lambda g: np.exp(-0.5j * s * t * g.xi2), real_valued=False)


def mult_wave_cos(c: float, t: float) -> Multiplier:
    return Multiplier("cos(ct|D|)", lambda g: np.cos(c * t * g.xi_abs))


def mult_wave_sinc(c: float, t: float) -> Multiplier:
    """(c|D|)^{-1} sin(ct|D|), equal to t at the zero mode."""

    def fn(g):
        w = c * g.xi_abs
        return np.where(w > 0, np.sin(w * t) / np.where(w > 0, w, 1.0), t)

    return Multiplier("sin(ct|D|)/(c|D|)", fn)


def _sign(sign) -> int:
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def apply_multiplier(f, m: Multiplier):
    """Multiply the coefficients of a scalar or vector field by ``m``."""
    sym = m.symbol(f.grid)
    if m.singular_power < 0 and m.descriptor.startswith("|D|"):
        zero = np.abs(f.coeffs[..., 0, 0, 0])
        scale = max(np.max(np.abs(f.coeffs)), 1e-300)
        if np.any(zero > 1e-12 * scale):
            raise ValueError(f"{m.descriptor} is singular at xi = 0 and the field has a nonzero mean")
    if isinstance(f, VectorField):
        if not (m.even and m.real_valued):
            raise ValueError("multiplier would break reality of a vector field")
        return VectorField(f.grid, f.coeffs * sym)
    return SpectralField(f.grid, f.coeffs * sym, f.real and m.even and m.real_valued)


# ---------------------------------------------------------------------------
# differential operators, Riesz transforms, projection
# ---------------------------------------------------------------------------


def derivative(f: SpectralField, axis: int) -> SpectralField:
    c = f.coeffs * (1j * f.grid.xi[axis])
    c[f.grid.nyquist] = 0.0
    return SpectralField(f.grid, c, f.real)


def gradient(f: SpectralField):
    """Gradient; a VectorField for real ``f``, else a coefficient array (3, n, n, n)."""
    g = f.grid
    c = np.stack([1j * g.xi[i] * f.coeffs for i in range(3)])
    c[:, g.nyquist] = 0.0
    if f.real:
        return VectorField(g, c)
    return c


def divergence(v: VectorField) -> SpectralField:
    g = v.grid
    c = sum(1j * g.xi[i] * v.coeffs[i] for i in range(3))
    return SpectralField(g, c, True)


def curl(v: VectorField) -> VectorField:
    g = v.grid
    a = v.coeffs
    k = g.xi
    c = np.stack([
        1j * (k[1] * a[2] - k[2] * a[1]),
        1j * (k[2] * a[0] - k[0] * a[2]),
        1j * (k[0] * a[1] - k[1] * a[0]),
    ])
    return VectorField(g, c)


def riesz(f: SpectralField, axis: int) -> SpectralField:
    """R_i = (-Delta)^{-1/2} d_i; symbol i xi_i/|xi|, zero mode mapped to 0."""
    g = f.grid
    sym = 1j * g.xi[axis] * _safe_inverse(g.xi_abs)
    c = f.coeffs * sym
    c[g.nyquist] = 0.0
    return SpectralField(g, c, f.real)


def leray_project(v: VectorField) -> VectorField:
    """X - grad Delta^{-1} div X; the zero mode passes through unchanged."""
    g = v.grid
    k = g.xi
    inv = _safe_inverse(g.xi2)
    kdot = sum(k[i] * v.coeffs[i] for i in range(3)) * inv
    c = np.stack([v.coeffs[i] - k[i] * kdot for i in range(3)])
    return VectorField(g, c)


def divergence_residual(v: VectorField) -> float:
    """max_k |xi . A(k)| relative to max_k |xi| |A(k)| (0 for a constant field)."""
    g = v.grid
    div = np.abs(sum(g.xi[i] * v.coeffs[i] for i in range(3)))
    scale = np.max(g.xi_abs * np.sqrt(np.sum(np.abs(v.coeffs) ** 2, axis=0)))
    if scale == 0:
        return 0.0
    return float(np.max(div) / scale)


def low_high_split(f: SpectralField, c: float) -> tuple[SpectralField, SpectralField]:
    """Split into chi(xi/c) f and (1 - chi(xi/c)) f."""
    low = apply_multiplier(f, mult_low_pass(c))
    high = SpectralField(f.grid, f.coeffs - low.coeffs, f.real)
    return low, high


# ---------------------------------------------------------------------------
# dealiased products
# ---------------------------------------------------------------------------


def dealiased_product(*factors: SpectralField) -> SpectralField:
    """Alias-free pointwise product of two or three band-limited fields.

    Quadratic products are evaluated on a 3/2-padded grid, cubic ones on a
    2-padded grid; the result is truncated back and its Nyquist modes zeroed.
    """
    if len(factors) not in (2, 3):
        raise ValueError("dealiased_product takes two or three factors")
    grid = factors[0].grid
    for f in factors[1:]:
        _check_grid(factors[0], f)
    pad = grid.padder(1.5 if len(factors) == 2 else 2.0)
    values = pad.lift(np.stack([f.coeffs for f in factors]))
    prod = values[0]
    for v in values[1:]:
        prod = prod * v
    real = all(f.real for f in factors)
    if real:
        prod = prod.real
    return SpectralField(grid, pad.drop(prod), real)


def convolve_direct(*coeff_arrays: np.ndarray, grid: Grid) -> np.ndarray:
    """Product coefficients by direct (non-FFT) linear convolution.

    An independent oracle for :func:`dealiased_product`, practical for small
    ``n`` only.  The full linear convolution of the centered coefficient
    blocks is formed with ``scipy.signal.convolve(method="direct")`` and the
    base band is extracted, Nyquist modes zeroed.
    """
    from scipy.signal import convolve

    if len(coeff_arrays) not in (2, 3):
        raise ValueError("convolve_direct takes two or three arrays")
    n = grid.n
    acc = np.fft.fftshift(coeff_arrays[0])
    for c in coeff_arrays[1:]:
        acc = convolve(acc, np.fft.fftshift(c), mode="full", method="direct")
    order = len(coeff_arrays)
    offset = order * (n // 2)  # position of index 0 in the full output
    k = grid.k1d
    sel = k + offset
    out = acc[np.ix_(sel, sel, sel)] * float(n) ** (-1.5 * (order - 1))
    out[grid.nyquist] = 0.0
    return out


# ---------------------------------------------------------------------------
# snapshots
# ---------------------------------------------------------------------------


def write_snapshot(prefix, f, t: float | None = None, c: float | None = None, **extra) -> tuple[Path, Path]:
    """Write ``prefix.bin`` (little-endian float64, interleaved re/im, row-major
    k order) and a ``prefix.json`` header."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    is_vec = isinstance(f, VectorField)
    data = np.ascontiguousarray(f.coeffs, dtype="<c16").view("<f8")
    bin_path = prefix.with_suffix(".bin")
    bin_path.write_bytes(data.tobytes())
    header = {
        "n": f.grid.n,
        "L": f.grid.L,
        "reality": "real" if (is_vec or f.real) else "complex",
        "components": 3 if is_vec else 1,
        "t": t,
        "c": c,
        "dtype": "<f8",
        "layout": "interleaved re,im; row-major k order (fftfreq)",
    }
    header.update(extra)
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(header, indent=2, sort_keys=True))
    return bin_path, json_path


def read_snapshot(prefix):
    """Inverse of :func:`write_snapshot`; returns ``(field, header)``."""
    prefix = Path(prefix)
    header = json.loads(prefix.with_suffix(".json").read_text())
    grid = Grid(header["n"], header["L"])
    raw = np.frombuffer(prefix.with_suffix(".bin").read_bytes(), dtype="<f8")
    coeffs = raw.view("<c16").astype(complex)
    if header["components"] == 3:
        return VectorField(grid, coeffs.reshape((3,) + grid.shape)), header
    return SpectralField(grid, coeffs.reshape(grid.shape), header["reality"] == "real"), header
