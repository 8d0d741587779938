"""The split Klein-Gordon-Maxwell system in Coulomb gauge.

The scalar field is carried by its electron/positron components

    φ = e^{-itc²} ψ⁺ + e^{+itc²} ψ⁻,

which evolve by ``i∂ₜψ± = ±(M - c²)ψ± + A₀ψ± ± e^{±itc²} R`` with the
remainder

    R = ½ M⁻¹ { -2ic A·∇φ + A₀(M - c²)χ - (M - c²)(A₀χ) + |A|² φ },
    χ = e^{-itc²} ψ⁺ - e^{+itc²} ψ⁻ .

The scalar potential is instantaneous, ``ΔA₀ = -Re(φ · conj(M χ)) / c²``, and
the vector potential obeys ``∂ₜ²A = c²ΔA - c² G`` with

    G = -(1/c) P Im(φ ∇φ̄) + (1/c²) P(|φ|² A).

Internally all products are formed in the co-rotating frame
``φ̃ = e^{itc²} φ = ψ⁺ + e^{2itc²} ψ⁻`` where the rest-energy phase cancels
from every quadratic density, so only the ``e^{2itc²}`` interference factor
is ever evaluated.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.sparse.linalg import LinearOperator, cg

from .propagators import dt_max, phase_rotate, propagate_U, resolve_dt, wave_flow, WavePair
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    band_limit,
    dealiased_product,
    hc_from_xi2,
    leray_project,
    to_spectral,
    vector_from_physical,
)

__all__ = [
    "GaussianBump",
    "VortexBump",
    "DataSpec",
    "KgmState",
    "KgmDerived",
    "KgmOptions",
    "KgmRhs",
    "BlowupError",
    "TorusFitError",
    "build_initial_data",
    "solve_A0",
    "compute_remainder",
    "kgm_rhs",
    "derived_fields",
    "step_kgm",
    "run_kgm",
    "free_kg_exact",
    "charge",
    "limit_data",
    "torus_fit",
]

TORUS_FIT_TOL = 1e-8


class BlowupError(RuntimeError):
    """Raised when a step produces non-finite values or explosive growth."""

    def __init__(self, message: str, last_good=None):
        super().__init__(message)
        self.last_good = last_good


class TorusFitError(ValueError):
    """Initial data is not small near the faces of the periodic box."""


# ---------------------------------------------------------------------------
# data presets
# ---------------------------------------------------------------------------


def _displacement(grid: Grid, center) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Minimum-image displacement x - center on the torus."""
    if center is None:
        center = (0.5 * grid.L,) * 3
    L = grid.L
    return tuple((x - x0 + 0.5 * L) % L - 0.5 * L for x, x0 in zip(grid.mesh(), center))


@dataclass(frozen=True)
class GaussianBump:
    """``amplitude * exp(-|x - x0|²/(2 width²)) * exp(i k·(x - x0))``.

    ``center=None`` places the bump at the box center; ``amplitude`` may be
    complex.
    """

    amplitude: complex = 1.0
    width: float = 1.0
    center: Optional[tuple[float, float, float]] = None
    wavevector: tuple[float, float, float] = (0.0, 0.0, 0.0)

    def sample(self, grid: Grid) -> np.ndarray:
        if not self.width > 0:
            raise ValueError("bump width must be positive")
        d = _displacement(grid, self.center)
        r2 = d[0] ** 2 + d[1] ** 2 + d[2] ** 2
        phase = sum(k * x for k, x in zip(self.wavevector, d))
        return complex(self.amplitude) * np.exp(-0.5 * r2 / self.width**2 + 1j * phase)


@dataclass(frozen=True)
class VortexBump:
    """Divergence-free swirl ``amplitude * axis × (x - x0) * exp(-|x - x0|²/(2 width²))``."""

    amplitude: float = 0.0
    width: float = 1.0
    axis: tuple[float, float, float] = (0.0, 0.0, 1.0)
    center: Optional[tuple[float, float, float]] = None

    def sample(self, grid: Grid) -> np.ndarray:
        d = _displacement(grid, self.center)
        g = np.exp(-0.5 * (d[0] ** 2 + d[1] ** 2 + d[2] ** 2) / self.width**2)
        a = np.asarray(self.axis, dtype=float)
        a = a / np.linalg.norm(a)
        cross = (a[1] * d[2] - a[2] * d[1], a[2] * d[0] - a[0] * d[2], a[0] * d[1] - a[1] * d[0])
        return self.amplitude * np.stack([np.broadcast_to(comp * g, grid.shape) for comp in cross])


def _sum_samples(bumps: Sequence[GaussianBump], grid: Grid) -> np.ndarray:
    out = np.zeros(grid.shape, dtype=complex)
    for b in bumps:
        out += b.sample(grid)
    return out


@dataclass(frozen=True)
class DataSpec:
    """Limit data (α, β) and vector-potential data (a₀, a₁).

    The scalar field starts from ``φ(0) = α`` and ``∂ₜφ(0) = M β``, so the
    limit data are exact for every ``c``.
    """

    alpha: tuple[GaussianBump, ...] = ()
    beta: tuple[GaussianBump, ...] = ()
    a0: Optional[VortexBump] = None
    a1: Optional[VortexBump] = None
    seed: int = 0

    @classmethod
    def electron_positron(
        cls,
        electron: GaussianBump = GaussianBump(1.0, 1.0),
        positron: Optional[GaussianBump] = GaussianBump(0.5, 1.2),
        a0: Optional[VortexBump] = None,
        a1: Optional[VortexBump] = None,
        seed: int = 0,
    ) -> "DataSpec":
        """Data with ``ψ⁺(0) ≈ electron`` and ``ψ⁻(0) ≈ positron``.

        Uses ``α = g_e + g_p`` and ``β = -i (g_e - g_p)``, so that
        ``(α ± iβ)/2`` recovers the two bumps.
        """
        alpha = [electron]
        beta = [replace(electron, amplitude=-1j * complex(electron.amplitude))]
        if positron is not None:
            alpha.append(positron)
            beta.append(replace(positron, amplitude=1j * complex(positron.amplitude)))
        return cls(tuple(alpha), tuple(beta), a0, a1, seed)

    @classmethod
    def random(cls, seed: int, n_bumps: int = 2, L: float = 16.0, with_field: bool = True) -> "DataSpec":
        """Randomized electron/positron bumps near the box center (reproducible per seed)."""
        rng = np.random.default_rng(seed)

        def bump():
            amp = complex(rng.uniform(0.3, 1.0) * np.exp(2j * np.pi * rng.uniform()))
            center = tuple(0.5 * L + rng.uniform(-1.0, 1.0, 3))
            k = tuple(rng.uniform(-1.0, 1.0, 3))
            return GaussianBump(amp, float(rng.uniform(0.9, 1.2)), center, k)

        alpha, beta = [], []
        for j in range(n_bumps):
            b = bump()
            s = -1j if j % 2 == 0 else 1j
            alpha.append(b)
            beta.append(replace(b, amplitude=s * b.amplitude))
        a0 = None
        if with_field:
            axis = rng.standard_normal(3)
            a0 = VortexBump(float(rng.uniform(0.1, 0.4)), 1.2, tuple(axis / np.linalg.norm(axis)))
        return cls(tuple(alpha), tuple(beta), a0, None, seed)

    def fingerprint(self) -> str:
        blob = json.dumps(asdict(self), default=str, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def torus_fit(values: np.ndarray) -> float:
    """Ratio of the largest magnitude on the box faces to the global peak."""
    mag = np.abs(values)
    if mag.ndim == 4:
        mag = np.sqrt(np.sum(mag**2, axis=0))
    peak = mag.max()
    if peak == 0:
        return 0.0
    face = max(mag[0].max(), mag[:, 0].max(), mag[:, :, 0].max(),
               mag[-1].max(), mag[:, -1].max(), mag[:, :, -1].max())
    return float(face / peak)


# ---------------------------------------------------------------------------
# state
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KgmOptions:
    """Stepper switches.

    ``coupled=False`` turns off every nonlinear term (free Klein-Gordon and
    free waves).  ``formulation`` selects how the ψ± forcing is assembled:
    ``"commutator"`` uses ``A₀ψ± ± e^{±itc²}R``; ``"alternative"`` uses
    ``½A₀(ψ± + e^{±2itc²}ψ∓) ± e^{±itc²}R̃`` with
    ``R̃ = ½M⁻¹{-2icA·∇φ + A₀Mχ + |A|²φ}``.
    """

    coupled: bool = True
    formulation: str = "commutator"
    blowup_factor: float = 10.0

    def __post_init__(self):
        if self.formulation not in ("commutator", "alternative"):
            raise ValueError(f"unknown formulation {self.formulation!r}")


@dataclass(frozen=True, eq=False)
class KgmState:
    psi_plus: SpectralField
    psi_minus: SpectralField
    A: VectorField
    At: VectorField
    t: float
    c: float
    info: dict = field(default_factory=dict, compare=False)

    @property
    def grid(self) -> Grid:
        return self.psi_plus.grid

    def norm(self) -> float:
        """Crude size used by the blowup detector."""
        g = self.grid
        tot = (np.sum(np.abs(self.psi_plus.coeffs) ** 2) + np.sum(np.abs(self.psi_minus.coeffs) ** 2)
               + np.sum((1 + g.xi2) * np.abs(self.A.coeffs) ** 2)
               + np.sum(np.abs(self.At.coeffs) ** 2) / self.c**2)
        return float(np.sqrt(tot * g.cell_volume))

    def is_finite(self) -> bool:
        return all(np.all(np.isfinite(a)) for a in
                   (self.psi_plus.coeffs, self.psi_minus.coeffs, self.A.coeffs, self.At.coeffs))


class KgmDerived(NamedTuple):
    A0: SpectralField
    phi: SpectralField
    phi_t: SpectralField
    R: SpectralField


class KgmRhs(NamedTuple):
    """Right-hand sides at one instant.

    ``F_plus``/``F_minus`` are the forcings in ``i∂ₜψ± ∓ (M - c²)ψ± = F±``,
    ``G`` the wave source in ``c⁻²∂ₜ²A - ΔA = G``; ``A0`` and ``R`` as above.
    """

    F_plus: SpectralField
    F_minus: SpectralField
    G: VectorField
    A0: SpectralField
    R: SpectralField


# ---------------------------------------------------------------------------
# elliptic solves and nonlinear terms (co-rotating frame)
# ---------------------------------------------------------------------------


def _inv_laplacian(coeffs: np.ndarray, grid: Grid) -> np.ndarray:
    out = np.zeros_like(coeffs)
    nz = grid.xi2 > 0
    out[nz] = -coeffs[nz] / grid.xi2[nz]
    return out


def _frame(psi_p: np.ndarray, psi_m: np.ndarray, t: float, c: float):
    e2 = np.exp(2j * t * c * c)
    return psi_p + e2 * psi_m, psi_p - e2 * psi_m, e2


def _a0_from_frame(phit: np.ndarray, chit: np.ndarray, grid: Grid, c: float):
    """A₀ and the removed mean of its source from co-rotating φ̃, χ̃."""
    mchi = chit * (1.0 + hc_from_xi2(grid.xi2, c) / c**2)  # (M/c²) χ̃
    pad = grid.padder(1.5)
    vals = pad.lift(np.stack([phit, mchi]))
    src = pad.drop_real(np.real(vals[0] * np.conj(vals[1])))
    mean = src[0, 0, 0].real
    src[0, 0, 0] = 0.0
    a0 = _inv_laplacian(-src, grid)
    # the physical mean of the charge density, i.e. net charge per volume
    defect = mean / np.sqrt(grid.n**3)
    return SpectralField(grid, a0, True), float(defect)


def solve_A0(psi_plus: SpectralField, psi_minus: SpectralField, c: float, t: float = 0.0):
    """Solve ``ΔA₀ = -(ρ - ρ̄)`` with ``ρ = Re(φ · conj(Mχ)) / c²``.

    Returns ``(A0, charge_defect)`` where ``charge_defect`` is the subtracted
    mean ``ρ̄`` (the net charge density the neutralizing background absorbs).
    """
    if psi_plus.grid != psi_minus.grid:
        raise ValueError("fields live on different grids")
    phit, chit, _ = _frame(psi_plus.coeffs, psi_minus.coeffs, t, c)
    return _a0_from_frame(phit, chit, psi_plus.grid, c)


def _nonlinear(psi_p, psi_m, A: VectorField, t: float, c: float, formulation: str, need_G: bool = True):
    """Forcings in the co-rotating frame.

    Returns ``(A0, Rhat, E_plus, E_minus, G, defect)`` with ``F± = A₀ψ± + E±``
    and ``R = e^{-itc²} Rhat``.  Quadratic terms are evaluated on the
    3/2-padded grid, cubic terms on the 2-padded grid.
    """
    grid = psi_p.grid
    phit, chit, e2 = _frame(psi_p.coeffs, psi_m.coeffs, t, c)
    A0, defect = _a0_from_frame(phit, chit, grid, c)
    hc = hc_from_xi2(grid.xi2, c)
    M = c * c + hc
    k = grid.xi
    grad = np.stack([1j * k[i] * phit for i in range(3)])
    grad[:, grid.nyquist] = 0.0
    has_A = bool(np.any(A.coeffs))

    q = grid.padder(1.5)
    mid_term = hc * chit if formulation == "commutator" else M * chit
    cv = q.lift(np.concatenate([phit[None], grad, chit[None], mid_term[None]]))
    phi_q, grad_q, chi_q, mid_q = cv[0], cv[1:4], cv[4], cv[5]
    rv = q.lift_real(np.concatenate([A0.coeffs[None], A.coeffs]) if has_A else A0.coeffs[None])
    a0_q = rv[0]
    quad = a0_q * mid_q
    if has_A:
        quad -= 2j * c * np.sum(rv[1:4] * grad_q, axis=0)
    bracket_c, a0chi = q.drop(np.stack([quad, a0_q * chi_q]))

    cubic_G = None
    if has_A:
        w = grid.padder(2.0)
        phi_w = w.lift(phit)
        A_w = w.lift_real(A.coeffs)
        bracket_c += w.drop(np.sum(A_w**2, axis=0) * phi_w)
        if need_G:
            cubic_G = w.drop_real(np.abs(phi_w) ** 2 * A_w) / c**2

    if formulation == "commutator":
        rhat = 0.5 * (bracket_c - hc * a0chi) / M
        e_plus = rhat
        e_minus = -np.conj(e2) * rhat
    else:
        rhat = 0.5 * bracket_c / M
        # subtract A₀ψ± from ½A₀(ψ± + e^{±2itc²}ψ∓) so the potential part is shared
        pv = q.lift(np.stack([psi_p.coeffs, psi_m.coeffs]))
        a0psi_p, a0psi_m = q.drop(a0_q * pv)
        e_plus = 0.5 * (e2 * a0psi_m - a0psi_p) + rhat
        e_minus = 0.5 * (np.conj(e2) * a0psi_p - a0psi_m) - np.conj(e2) * rhat

    G = None
    if need_G:
        current = np.imag(phi_q[None] * np.conj(grad_q))  # Im(φ ∇φ̄)
        g_coeffs = -q.drop_real(current) / c
        if cubic_G is not None:
            g_coeffs += cubic_G
        G = leray_project(VectorField(grid, g_coeffs))
    return A0, rhat, e_plus, e_minus, G, defect


def kgm_rhs(state: KgmState, options: KgmOptions = KgmOptions()) -> KgmRhs:
    """Forcings F±, wave source G, potential A₀ and remainder R at ``state.t``."""
    g = state.grid
    c, t = state.c, state.t
    A0, rhat, e_p, e_m, G, _ = _nonlinear(state.psi_plus, state.psi_minus, state.A, t, c, options.formulation)
    pad = g.padder(1.5)
    a0_l = pad.lift(A0.coeffs[None])[0].real
    fp = pad.drop(a0_l * pad.lift(state.psi_plus.coeffs[None])[0]) + e_p
    fm = pad.drop(a0_l * pad.lift(state.psi_minus.coeffs[None])[0]) + e_m
    R = SpectralField(g, rhat * np.exp(-1j * t * c * c), False)
    return KgmRhs(SpectralField(g, fp), SpectralField(g, fm), G, A0, R)


def compute_remainder(state: KgmState, A0: Optional[SpectralField] = None) -> SpectralField:
    """The remainder R, with the commutator formed as a literal difference of orderings.

    If ``A0`` is given it is used instead of solving for it.
    """
    g = state.grid
    c, t = state.c, state.t
    ph = np.exp(-1j * t * c * c)
    phi = ph * (state.psi_plus.coeffs + state.psi_minus.coeffs / ph**2)
    chi = ph * (state.psi_plus.coeffs - state.psi_minus.coeffs / ph**2)
    if A0 is None:
        A0, _ = solve_A0(state.psi_plus, state.psi_minus, c, t)
    phi_f = SpectralField(g, phi)
    chi_f = SpectralField(g, chi)
    hc = hc_from_xi2(g.xi2, c)
    M = c * c + hc
    terms = np.zeros(g.shape, dtype=complex)
    for i, comp in enumerate(state.A.components):
        dphi = SpectralField(g, phi * 1j * g.xi[i] * (~g.nyquist))
        terms += -2j * c * dealiased_product(comp, dphi).coeffs
    terms += dealiased_product(A0, SpectralField(g, hc * chi)).coeffs
    terms -= hc * dealiased_product(A0, chi_f).coeffs
    for comp in state.A.components:
        terms += dealiased_product(comp, comp, phi_f).coeffs
    return SpectralField(g, 0.5 * terms / M)


def derived_fields(state: KgmState) -> KgmDerived:
    """A₀, φ, ∂ₜφ and R at ``state.t``; uses ``i∂ₜφ = Mχ + A₀φ``."""
    g = state.grid
    c, t = state.c, state.t
    A0, _ = solve_A0(state.psi_plus, state.psi_minus, c, t)
    ph = np.exp(-1j * t * c * c)
    phi = ph * state.psi_plus.coeffs + np.conj(ph) * state.psi_minus.coeffs
    chi = ph * state.psi_plus.coeffs - np.conj(ph) * state.psi_minus.coeffs
    M = c * c + hc_from_xi2(g.xi2, c)
    a0phi = dealiased_product(A0, SpectralField(g, phi)).coeffs
    phi_t = -1j * (M * chi + a0phi)
    R = compute_remainder(state, A0)
    return KgmDerived(A0, SpectralField(g, phi), SpectralField(g, phi_t), R)


def charge(state: KgmState) -> float:
    """``∫ ρ dx`` with ``ρ = Re(φ conj(Mχ))/c²``; conserved by the continuous flow."""
    g = state.grid
    c = state.c
    w = 1.0 + hc_from_xi2(g.xi2, c) / c**2
    q = np.sum(w * np.abs(state.psi_plus.coeffs) ** 2) - np.sum(w * np.abs(state.psi_minus.coeffs) ** 2)
    return float(q * g.cell_volume)


# ---------------------------------------------------------------------------
# initial data
# ---------------------------------------------------------------------------


def _solve_initial_a0(alpha: SpectralField, phi1: SpectralField, c: float, tol: float = 1e-13):
    """Zero-mean solution of ``ΔA₀ - P₀(|α|² A₀)/c² = -P₀ Im(α conj φ₁)/c²``.

    At ``t = 0`` the potential enters its own source through ``Mχ = iφ₁ - A₀α``.
    The operator is symmetric negative definite on mean-free functions, so it is
    solved by preconditioned conjugate gradients.
    """
    g = alpha.grid
    pad = g.padder(1.5)
    al, p1 = pad.lift(np.stack([alpha.coeffs, phi1.coeffs]))
    rhs = pad.drop(np.imag(al * np.conj(p1))) / c**2
    rhs[0, 0, 0] = 0.0
    shape = g.shape
    nz = g.xi2 > 0
    # work with the real-valued physical representation of the zero-mean unknown
    xi2 = g.xi2

    def apply(v):
        coeffs = sfft.fftn(v.reshape(shape), norm="ortho")
        coeffs[g.nyquist] = 0.0
        coeffs[0, 0, 0] = 0.0
        # same discrete form as the explicit potential: Re(α conj(T(A₀α)))/c²,
        # with T the truncation to the base band; symmetric since it is ⟨T(Bα), T(Aα)⟩
        a0_l = pad.lift(coeffs[None])[0].real
        ta = pad.lift(pad.drop(a0_l * al)[None])[0]
        prod = pad.drop_real(np.real(al * np.conj(ta))) / c**2
        prod[0, 0, 0] = 0.0
        out = xi2 * coeffs + prod  # -(Δ - P₀ dens) applied
        return sfft.ifftn(out, norm="ortho").real.ravel()

    def precond(v):
        coeffs = sfft.fftn(v.reshape(shape), norm="ortho")
        out = np.zeros_like(coeffs)
        out[nz] = coeffs[nz] / xi2[nz]
        return sfft.ifftn(out, norm="ortho").real.ravel()

    size = int(np.prod(shape))
    op = LinearOperator((size, size), matvec=apply, dtype=float)
    pre = LinearOperator((size, size), matvec=precond, dtype=float)
    b = sfft.ifftn(rhs, norm="ortho").real.ravel()
    if not np.any(b):
        return SpectralField(g, np.zeros(shape, dtype=complex), True), 0
    x0 = precond(b)
    sol, info = cg(op, b, x0=x0, rtol=tol, atol=0.0, M=pre, maxiter=500)
    if info != 0:
        raise RuntimeError(f"initial A0 solve did not converge (info={info})")
    coeffs = sfft.fftn(sol.reshape(shape), norm="ortho")
    coeffs[g.nyquist] = 0.0
    coeffs[0, 0, 0] = 0.0
    return SpectralField(g, coeffs, True), info


def _vector_preset(preset: Optional[VortexBump], grid: Grid) -> tuple[VectorField, float]:
    if preset is None or preset.amplitude == 0:
        return VectorField.zeros(grid), 0.0
    vals = preset.sample(grid)
    fit = torus_fit(vals)
    return band_limit(leray_project(vector_from_physical(vals, grid))), fit


def limit_data(spec: DataSpec, grid: Grid) -> tuple[SpectralField, SpectralField]:
    """Band-limited ``(α, β)``: the data of the limit system ``v±(0) = ½(α ± iβ)``."""
    alpha = band_limit(to_spectral(_sum_samples(spec.alpha, grid), grid, real=False))
    beta = band_limit(to_spectral(_sum_samples(spec.beta, grid), grid, real=False))
    return alpha, beta


def build_initial_data(spec: DataSpec, c: float, grid: Grid, coupled: bool = True,
                       fit_tol: float = TORUS_FIT_TOL) -> KgmState:
    """Well-prepared data: ``φ(0) = α``, ``∂ₜφ(0) = Mβ``, ``A = P a₀``, ``∂ₜA = P a₁``.

    The split fields are ``ψ±(0) = ½{α ± M⁻¹(iMβ - A₀α)}`` with the
    self-consistent initial potential A₀.  Data-size diagnostics are recorded
    in ``state.info``.
    """
    if not c > 0:
        raise ValueError("c must be positive")
    alpha_v = _sum_samples(spec.alpha, grid)
    beta_v = _sum_samples(spec.beta, grid)
    fits = {"alpha": torus_fit(alpha_v), "beta": torus_fit(beta_v)}
    A, fits["a0"] = _vector_preset(spec.a0, grid)
    At, fits["a1"] = _vector_preset(spec.a1, grid)
    bad = {k: v for k, v in fits.items() if v > fit_tol}
    if bad:
        raise TorusFitError(f"data does not fit in the box (face/peak ratios {bad})")
    alpha = band_limit(to_spectral(alpha_v, grid, real=False))
    beta = band_limit(to_spectral(beta_v, grid, real=False))
    hc = hc_from_xi2(grid.xi2, c)
    M = c * c + hc
    phi1 = SpectralField(grid, M * beta.coeffs)
    if coupled and np.any(alpha.coeffs):
        A0, _ = _solve_initial_a0(alpha, phi1, c)
        a0alpha = dealiased_product(A0, alpha).coeffs
    else:
        A0 = SpectralField(grid, np.zeros(grid.shape, dtype=complex), True)
        a0alpha = np.zeros(grid.shape, dtype=complex)
    split = 1j * beta.coeffs - a0alpha / M
    psi_p = SpectralField(grid, 0.5 * (alpha.coeffs + split))
    psi_m = SpectralField(grid, 0.5 * (alpha.coeffs - split))
    dV = grid.cell_volume
    h1 = lambda f: float(np.sqrt(np.sum((1 + grid.xi2) * np.abs(f) ** 2) * dV))
    info = {
        "torus_fit": fits,
        "alpha_h1": h1(alpha.coeffs),
        "beta_h1": h1(beta.coeffs),
        "a0_h1dot": float(np.sqrt(np.sum(grid.xi2 * np.abs(A.coeffs) ** 2) * dV)),
        "a1_l2_over_c": float(np.sqrt(np.sum(np.abs(At.coeffs) ** 2) * dV)) / c,
        "A0_initial_h1dot": float(np.sqrt(np.sum(grid.xi2 * np.abs(A0.coeffs) ** 2) * dV)),
        "psi_minus_h1": h1(psi_m.coeffs),
        "psi_plus_h1": h1(psi_p.coeffs),
        "spec": spec.fingerprint(),
    }
    return KgmState(psi_p, psi_m, A, At, 0.0, float(c), info)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _linear_half(state: KgmState, tau: float) -> KgmState:
    c = state.c
    w = wave_flow(WavePair(state.A, state.At), tau, c)
    return KgmState(
        propagate_U(state.psi_plus, tau, +1, c),
        propagate_U(state.psi_minus, tau, -1, c),
        w.A, w.At, state.t, c, state.info,
    )


def _nonlinear_step(state: KgmState, dt: float, t0: float, options: KgmOptions) -> KgmState:
    """Exponential midpoint rule for ``i∂ₜψ± = A₀ψ± + E±``, ``∂ₜ(∂ₜA) = -c²G``; A frozen."""
    c = state.c
    g = state.grid
    pp, pm = state.psi_plus, state.psi_minus
    A0, _, ep, em, G, _ = _nonlinear(pp, pm, state.A, t0, c, options.formulation)
    half_p = phase_rotate(SpectralField(g, pp.coeffs - 0.5j * dt * ep), A0, 0.5 * dt)
    half_m = phase_rotate(SpectralField(g, pm.coeffs - 0.5j * dt * em), A0, 0.5 * dt)
    A0h, _, eph, emh, Gh, _ = _nonlinear(half_p, half_m, state.A, t0 + 0.5 * dt, c, options.formulation)
    new_p = phase_rotate(pp, A0h, dt).coeffs - 1j * dt * phase_rotate(SpectralField(g, eph), A0h, 0.5 * dt).coeffs
    new_m = phase_rotate(pm, A0h, dt).coeffs - 1j * dt * phase_rotate(SpectralField(g, emh), A0h, 0.5 * dt).coeffs
    At = VectorField(g, state.At.coeffs - dt * c * c * Gh.coeffs)
    return KgmState(SpectralField(g, new_p), SpectralField(g, new_m), state.A, At, state.t, c, state.info)


def step_kgm(state: KgmState, dt: float, options: KgmOptions = KgmOptions()) -> KgmState:
    """One Strang step: half linear flow, nonlinear midpoint update, half linear flow."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = _linear_half(state, 0.5 * dt)
    if options.coupled:
        s = _nonlinear_step(s, dt, state.t, options)
    s = _linear_half(s, 0.5 * dt)
    new = KgmState(s.psi_plus, s.psi_minus, s.A, s.At, state.t + dt, state.c, state.info)
    if not new.is_finite():
        raise BlowupError(f"non-finite values at t={new.t:.6g}", state)
    n0, n1 = state.norm(), new.norm()
    if n0 > 0 and n1 > options.blowup_factor * n0:
        raise BlowupError(f"norm grew {n1 / n0:.3g}x in one step at t={new.t:.6g}", state)
    return new


@dataclass
class KgmTrajectory:
    times: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    states: list = field(default_factory=list)
    final: Optional[KgmState] = None
    dt: float = 0.0
    steps: int = 0


def run_kgm(
    state: KgmState,
    T: float,
    dt: Optional[float] = None,
    cadence: int = 50,
    observer: Optional[Callable[[KgmState], object]] = None,
    options: KgmOptions = KgmOptions(),
    keep_states: bool = False,
) -> KgmTrajectory:
    """Advance to ``state.t + T`` sampling ``cadence + 1`` equally spaced instants.

    ``dt`` defaults to ``0.1/c²`` and is reduced so that every sample interval
    holds a whole number of steps.  ``observer(state)`` is called at every
    sample; its return values are collected in ``samples``.
    """
    if not T > 0:
        raise ValueError("T must be positive")
    if cadence < 1:
        raise ValueError("cadence must be at least 1")
    dt = dt_max(state.c) if dt is None else dt
    interval = T / cadence
    dt_eff, per = resolve_dt(interval, dt)
    traj = KgmTrajectory(dt=dt_eff)
    t0 = state.t

    def record(s):
        traj.times.append(s.t)
        if observer is not None:
            traj.samples.append(observer(s))
        if keep_states:
            traj.states.append(s)

    record(state)
    for j in range(cadence):
        for _ in range(per):
            state = step_kgm(state, dt_eff, options)
            traj.steps += 1
        # pin sample instants to the exact grid of times
        state = replace(state, t=t0 + (j + 1) * interval)
        record(state)
    traj.final = state
    return traj


# ---------------------------------------------------------------------------
# free Klein-Gordon oracle
# ---------------------------------------------------------------------------


def free_kg_exact(alpha: SpectralField, beta: SpectralField, t: float, c: float):
    """Closed-form free Klein-Gordon solution with ``φ(0) = α``, ``∂ₜφ(0) = Mβ``.

    Returns ``(phi, psi_plus, psi_minus)`` at time ``t``, where
    ``ψ±(t) = e^{∓it(M - c²)} ½(α ± iβ)``.
    """
    p0 = SpectralField(alpha.grid, 0.5 * (alpha.coeffs + 1j * beta.coeffs))
    m0 = SpectralField(alpha.grid, 0.5 * (alpha.coeffs - 1j * beta.coeffs))
    pp = propagate_U(p0, t, +1, c)
    pm = propagate_U(m0, t, -1, c)
    ph = np.exp(-1j * t * c * c)
    phi = SpectralField(alpha.grid, ph * pp.coeffs + np.conj(ph) * pm.coeffs)
    return phi, pp, pm
