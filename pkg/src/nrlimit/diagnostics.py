"""Measured quantities: norms, the field energy, null forms, spacetime trackers
and the error metrics of the c → ∞ comparison.

Space norms are lattice norms (Plancherel-exact for L² based ones, plain
Riemann sums of the grid samples for Lᵖ).  Time norms over a trajectory use
the composite trapezoid rule on the diagnostic samples.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Optional, Sequence

import numpy as np
import scipy.fft as sfft
from scipy.integrate import trapezoid

from .kgm import KgmOptions, KgmState, charge, kgm_rhs, solve_A0
from .sp import SpState, solve_u
from .spectral import (
    Grid,
    SpectralField,
    VectorField,
    curl,
    dealiased_product,
    divergence_residual,
    hc_from_xi2,
    mult_low_pass,
)

__all__ = [
    "sobolev_norm",
    "lp_norm",
    "EnergyComponents",
    "kgm_energy",
    "free_energy",
    "null_form_Q",
    "null_identity_check",
    "q_symbol",
    "DiagnosticsRecord",
    "KgmRecorder",
    "strichartz_trackers",
    "convergence_error",
    "SweepResult",
    "CSV_COLUMNS",
    "fit_slope",
]

CSV_COLUMNS = (
    "run_id", "c", "t", "energy", "energy_drift_rel", "l2_psi_p", "l2_psi_m",
    "h1_err_p", "h1_err_m", "lap_a0_u_err_r1", "lap_a0_u_err_r32", "a0_u_h1dot_err",
    "X_T", "Y_T", "Z_T", "R_l1h1", "minv_a0phi_h1", "charge_defect",
)


# ---------------------------------------------------------------------------
# space norms
# ---------------------------------------------------------------------------


def _coeffs(f) -> tuple[np.ndarray, Grid]:
    if isinstance(f, (SpectralField, VectorField)):
        return f.coeffs, f.grid
    raise TypeError("expected a SpectralField or VectorField")


def sobolev_norm(f, s: float = 0.0, homogeneous: bool = False) -> float:
    """``‖(1+|ξ|²)^{s/2} f̂‖`` (or ``‖|ξ|^s f̂‖``), with the torus volume element."""
    c, g = _coeffs(f)
    if homogeneous:
        if s < 0:
            zero = np.abs(c[..., 0, 0, 0])
            if np.any(zero > 1e-12 * max(np.abs(c).max(), 1e-300)):
                raise ValueError("negative homogeneous norm of a field with nonzero mean")
            w = np.zeros(g.shape)
            np.power(g.xi2, s, out=w, where=g.xi2 > 0)
        else:
            w = g.xi2**s
    else:
        w = (1.0 + g.xi2) ** s
    return float(np.sqrt(np.sum(w * np.abs(c) ** 2) * g.cell_volume))


def lp_norm(f, p: float) -> float:
    """``(Σ |f(x_j)|ᵖ dV)^{1/p}``; vector fields use the pointwise Euclidean length."""
    c, g = _coeffs(f)
    vals = np.abs(sfft.ifftn(c, axes=(-3, -2, -1), norm="ortho"))
    if vals.ndim == 4:
        vals = np.sqrt(np.sum(vals**2, axis=0))
    if np.isinf(p):
        return float(vals.max())
    return float((np.sum(vals**p) * g.cell_volume) ** (1.0 / p))


# ---------------------------------------------------------------------------
# energy
# ---------------------------------------------------------------------------


class EnergyComponents(NamedTuple):
    """Halves of the integrated energy density terms; ``total`` is their sum."""

    total: float
    temporal: float   # |D₀φ|²
    spatial: float    # Σ|D_jφ|²
    mass: float       # c²|φ|²
    electric: float   # |E|²
    magnetic: float   # |B|²


def kgm_energy(state: KgmState, coupled: bool = True) -> EnergyComponents:
    """``½∫(|D₀φ|² + Σ|D_jφ|² + c²|φ|² + |E|² + |B|²) dx``.

    Uses ``D₀φ = (∂ₜφ + iA₀φ)/c = -(i/c) Mχ``, ``D_j = ∂_j + (i/c)A_j``,
    ``E = ∇A₀ - ∂ₜA/c`` and ``B = ∇×A``.  The quartic ``|A|²|φ|²`` part is
    integrated on the 2-padded grid, which is exact for band-limited fields.
    With ``coupled=False`` the potentials are ignored (free field energy).
    """
    g = state.grid
    c, t = state.c, state.t
    dV = g.cell_volume
    ph = np.exp(-1j * t * c * c)
    phi = ph * state.psi_plus.coeffs + np.conj(ph) * state.psi_minus.coeffs
    chi = ph * state.psi_plus.coeffs - np.conj(ph) * state.psi_minus.coeffs
    M = c * c + hc_from_xi2(g.xi2, c)
    sq = lambda a: float(np.sum(np.abs(a) ** 2) * dV)
    temporal = sq(M * chi) / c**2
    mass = c * c * sq(phi)
    grad = np.stack([1j * g.xi[i] * phi for i in range(3)])
    grad[:, g.nyquist] = 0.0
    if coupled and np.any(state.A.coeffs):
        pad = g.padder(2.0)
        vals = pad.lift(np.concatenate([phi[None], grad]))
        A_v = pad.lift_real(state.A.coeffs)
        D = vals[1:] + (1j / c) * A_v * vals[0]
        spatial = float(np.sum(np.abs(D) ** 2) * (g.L / pad.m) ** 3)
    else:
        spatial = sq(grad)
    if coupled:
        A0, _ = solve_A0(state.psi_plus, state.psi_minus, c, t)
        # ∇A₀ is a gradient and ∂ₜA is divergence-free: the cross term integrates to zero
        electric = float(np.sum(g.xi2 * np.abs(A0.coeffs) ** 2) * dV) + sq(state.At.coeffs) / c**2
        magnetic = sq(curl(state.A).coeffs)
    else:
        electric = magnetic = 0.0
    parts = 0.5 * np.array([temporal, spatial, mass, electric, magnetic])
    return EnergyComponents(float(parts.sum()), *map(float, parts))


def free_energy(state: KgmState) -> float:
    """Closed form ``(‖Mψ⁺‖² + ‖Mψ⁻‖²)/c²`` of the uncoupled energy."""
    g = state.grid
    c = state.c
    M = c * c + hc_from_xi2(g.xi2, c)
    tot = np.sum(M**2 * (np.abs(state.psi_plus.coeffs) ** 2 + np.abs(state.psi_minus.coeffs) ** 2))
    return float(tot * g.cell_volume / c**2)


# ---------------------------------------------------------------------------
# null forms
# ---------------------------------------------------------------------------


def _d(f: SpectralField, axis: int) -> SpectralField:
    c = 1j * f.grid.xi[axis] * f.coeffs
    c[f.grid.nyquist] = 0.0
    return SpectralField(f.grid, c, f.real)


def null_form_Q(u: SpectralField, v: SpectralField, i: int, j: int) -> SpectralField:
    """``Q_ij(u, v) = ∂_i u ∂_j v - ∂_j u ∂_i v``, dealiased."""
    if i == j:
        return SpectralField(u.grid, np.zeros(u.grid.shape, dtype=complex), u.real and v.real)
    a = dealiased_product(_d(u, i), _d(v, j))
    b = dealiased_product(_d(u, j), _d(v, i))
    return a - b


def q_symbol(eta: np.ndarray, zeta: np.ndarray, i: int, j: int) -> np.ndarray:
    """Symbol ``η_i ζ_j - η_j ζ_i`` (up to the factor i² = -1 of the two derivatives)."""
    return eta[..., i] * zeta[..., j] - eta[..., j] * zeta[..., i]


def null_identity_check(u: VectorField, v: SpectralField) -> float:
    """Relative L² gap in ``u·∇v = ½ Σ_ij Q_ij(|D|⁻¹(R_j uⁱ - R_i uʲ), v)``.

    The identity needs ``div u = 0`` (and mean-free components); for other
    inputs the returned gap is O(1).
    """
    g = u.grid
    lhs = np.zeros(g.shape, dtype=complex)
    comps = u.components
    for j in range(3):
        lhs += dealiased_product(comps[j], _d(v, j)).coeffs
    inv = np.zeros(g.shape)
    np.divide(1.0, g.xi2, out=inv, where=g.xi2 > 0)  # |D|⁻¹ R_k has symbol iξ_k/|ξ|²
    rhs = np.zeros(g.shape, dtype=complex)
    for i in range(3):
        for j in range(3):
            if i == j:
                continue
            w = 1j * inv * (g.xi[j] * u.coeffs[i] - g.xi[i] * u.coeffs[j])
            w[g.nyquist] = 0.0
            rhs += 0.5 * null_form_Q(SpectralField(g, w, True), v, i, j).coeffs
    scale = np.sqrt(np.sum(np.abs(lhs) ** 2))
    gap = np.sqrt(np.sum(np.abs(lhs - rhs) ** 2))
    if scale == 0:
        return float(gap)
    return float(gap / scale)


# ---------------------------------------------------------------------------
# per-sample records
# ---------------------------------------------------------------------------


@dataclass
class DiagnosticsRecord:
    """Named scalar time series sampled at strictly increasing ``times``."""

    times: list = field(default_factory=list)
    series: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def append(self, t: float, values: Mapping[str, float]) -> None:
        if self.times and not t > self.times[-1]:
            raise ValueError("sample times must be strictly increasing")
        for k, v in values.items():
            if not np.isfinite(v):
                raise FloatingPointError(f"diagnostic {k} is not finite at t={t}")
            self.series.setdefault(k, []).append(float(v))
        self.times.append(float(t))

    def __getitem__(self, key: str) -> np.ndarray:
        return np.asarray(self.series[key])

    def __contains__(self, key: str) -> bool:
        return key in self.series

    @property
    def t(self) -> np.ndarray:
        return np.asarray(self.times)

    def running_sup(self, key: str) -> np.ndarray:
        return np.maximum.accumulate(self[key])

    def running_integral(self, key: str, power: float = 1.0) -> np.ndarray:
        """``∫₀ᵗ f^power`` by the trapezoid rule, at every sample."""
        f = self[key] ** power
        t = self.t
        out = np.zeros_like(f)
        out[1:] = np.cumsum(0.5 * (f[1:] + f[:-1]) * np.diff(t))
        return out

    def sup(self, key: str) -> float:
        return float(np.max(self[key]))


def _h1(c: np.ndarray, g: Grid) -> float:
    return float(np.sqrt(np.sum((1 + g.xi2) * np.abs(c) ** 2) * g.cell_volume))


def _l2(c: np.ndarray, g: Grid) -> float:
    return float(np.sqrt(np.sum(np.abs(c) ** 2) * g.cell_volume))


def _lp_coeffs(c: np.ndarray, g: Grid, p: float) -> float:
    vals = np.abs(sfft.ifftn(c, norm="ortho"))
    return float((np.sum(vals**p) * g.cell_volume) ** (1.0 / p))


class KgmRecorder:
    """Observer for :func:`nrlimit.kgm.run_kgm` collecting every per-sample scalar.

    If ``reference`` maps sample index to the limit-system state at the same
    instant, the comparison errors are recorded too.
    """

    def __init__(self, reference: Optional[Sequence[SpState]] = None,
                 options: KgmOptions = KgmOptions(), r_exponents=(1.0, 1.5)):
        self.reference = reference
        self.options = options
        self.r_exponents = tuple(r_exponents)
        self.record = DiagnosticsRecord()
        self._index = 0

    def __call__(self, state: KgmState) -> dict:
        vals = sample_diagnostics(state, self.options)
        if self.reference is not None:
            ref = self.reference[self._index]
            if abs(ref.t - state.t) > 1e-9 * max(1.0, abs(state.t)):
                raise ValueError("reference trajectory is sampled at different times")
            vals.update(comparison_errors(state, ref, self.r_exponents))
        self._index += 1
        self.record.append(state.t, vals)
        return vals


def sample_diagnostics(state: KgmState, options: KgmOptions = KgmOptions()) -> dict:
    """All instantaneous scalars needed by the trackers, the CSV and the gates."""
    g = state.grid
    c = state.c
    coupled = options.coupled
    energy = kgm_energy(state, coupled=coupled)
    out = {
        "energy": energy.total,
        "charge": charge(state),
        "l2_psi_p": _l2(state.psi_plus.coeffs, g),
        "l2_psi_m": _l2(state.psi_minus.coeffs, g),
        "h1_psi_p": _h1(state.psi_plus.coeffs, g),
        "h1_psi_m": _h1(state.psi_minus.coeffs, g),
        "A_h1dot": float(np.sqrt(np.sum(g.xi2 * np.abs(state.A.coeffs) ** 2) * g.cell_volume)),
        "At_l2_over_c": _l2(state.At.coeffs, g) / c,
        "div_A": max(divergence_residual(state.A), divergence_residual(state.At)),
    }
    low = mult_low_pass(c).symbol(g)
    for tag, psi in (("p", state.psi_plus), ("m", state.psi_minus)):
        lo = low * psi.coeffs
        out[f"low_l2_{tag}"] = _l2(lo, g)
        out[f"low_l6_{tag}"] = _lp_coeffs(lo, g, 6)
    if coupled:
        rhs = kgm_rhs(state, options)
        A0 = rhs.A0
        _, defect = solve_A0(state.psi_plus, state.psi_minus, c, state.t)
        M = c * c + hc_from_xi2(g.xi2, c)
        ph = np.exp(-1j * state.t * c * c)
        phi = SpectralField(g, ph * state.psi_plus.coeffs + np.conj(ph) * state.psi_minus.coeffs)
        out.update({
            "F_h1_p": _h1(rhs.F_plus.coeffs, g),
            "F_h1_m": _h1(rhs.F_minus.coeffs, g),
            "box_A_l2": _l2(rhs.G.coeffs, g),
            "R_h1": _h1(rhs.R.coeffs, g),
            "minv_a0phi_h1": _h1(dealiased_product(A0, phi).coeffs / M, g),
            "charge_defect": abs(defect),
            "grad_A0_l2": float(np.sqrt(np.sum(g.xi2 * np.abs(A0.coeffs) ** 2) * g.cell_volume)),
            "grad_A0_l3": lp_norm(VectorField(g, np.stack([1j * g.xi[i] * A0.coeffs for i in range(3)])), 3),
        })
    else:
        out.update({"F_h1_p": 0.0, "F_h1_m": 0.0, "box_A_l2": 0.0, "R_h1": 0.0,
                    "minv_a0phi_h1": 0.0, "charge_defect": 0.0, "grad_A0_l2": 0.0, "grad_A0_l3": 0.0})
    return out


def comparison_errors(state: KgmState, ref: SpState, r_exponents=(1.0, 1.5)) -> dict:
    """Instantaneous ``‖ψ± - v±‖_{H¹}``, ``‖Δ(A₀ - u)‖_{Lʳ}`` and ``‖A₀ - u‖_{Ḣ¹}``."""
    g = state.grid
    if ref.grid != g:
        raise ValueError("trajectories live on different grids")
    A0, _ = solve_A0(state.psi_plus, state.psi_minus, state.c, state.t)
    u, _ = solve_u(ref.v_plus, ref.v_minus)
    d = A0.coeffs - u.coeffs
    out = {
        "h1_err_p": _h1(state.psi_plus.coeffs - ref.v_plus.coeffs, g),
        "h1_err_m": _h1(state.psi_minus.coeffs - ref.v_minus.coeffs, g),
        "a0_u_h1dot_err": float(np.sqrt(np.sum(g.xi2 * np.abs(d) ** 2) * g.cell_volume)),
    }
    lap = -g.xi2 * d
    for r in r_exponents:
        out[f"lap_a0_u_err_r{_rtag(r)}"] = _lp_coeffs(lap, g, r)
    return out


def _rtag(r: float) -> str:
    return {1.0: "1", 1.5: "32", 2.0: "2", 3.0: "3"}.get(float(r), str(r).replace(".", "p"))


# ---------------------------------------------------------------------------
# trackers and error summaries
# ---------------------------------------------------------------------------


class Trackers(NamedTuple):
    X: np.ndarray
    Y: np.ndarray
    Z: np.ndarray


def strichartz_trackers(record: DiagnosticsRecord) -> Trackers:
    """Running ``X_T``, ``Y_T``, ``Z_T`` at every sample of a recorded trajectory.

    X_T = ‖A‖_{L∞Ḣ¹} + ‖∂ₜA‖_{L∞L²}/c + c‖□A‖_{L¹L²}
    Y_T = Σ± ‖ψ±‖_{L∞H¹} + ‖L±ψ±‖_{L¹H¹}
    Z_T = Σ± ‖ψ±_l‖_{L∞L²} + ‖ψ±_l‖_{L²L⁶}

    ``□A`` and ``L±ψ±`` are the recorded right-hand sides; ``ψ±_l`` is the
    low-frequency part below the cutoff ``c``.
    """
    c = record.metadata.get("c")
    if c is None:
        raise ValueError("record metadata must carry the light speed 'c'")
    X = (record.running_sup("A_h1dot") + record.running_sup("At_l2_over_c")
         + c * record.running_integral("box_A_l2"))
    Y = np.zeros_like(X)
    Z = np.zeros_like(X)
    for tag in ("p", "m"):
        Y += record.running_sup(f"h1_psi_{tag}") + record.running_integral(f"F_h1_{tag}")
        Z += record.running_sup(f"low_l2_{tag}") + np.sqrt(record.running_integral(f"low_l6_{tag}", 2.0))
    return Trackers(X, Y, Z)


def convergence_error(record: DiagnosticsRecord) -> dict:
    """Sup-over-samples comparison errors plus the auxiliary decay norms."""
    needed = ("h1_err_p", "h1_err_m", "a0_u_h1dot_err")
    for k in needed:
        if k not in record:
            raise ValueError("record carries no comparison errors (no reference trajectory)")
    out = {k: record.sup(k) for k in needed}
    for k in record.series:
        if k.startswith("lap_a0_u_err_r"):
            out[k] = record.sup(k)
    out["minv_a0phi_h1"] = record.sup("minv_a0phi_h1")
    out["R_l1h1"] = float(record.running_integral("R_h1")[-1])
    return out


def fit_slope(c_values: Sequence[float], values: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope of log(value) against log(c) and the RMS residual."""
    x = np.log(np.asarray(c_values, dtype=float))
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.log(np.asarray(values, dtype=float))
    if len(x) < 2 or not np.all(np.isfinite(y)):
        return float("nan"), float("nan")
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    return float(coef[0]), float(np.sqrt(np.mean(resid**2)))


@dataclass
class SweepResult:
    """Per-c records and summaries of a sweep; ``failures`` maps c to an error message."""

    c_values: list
    records: dict = field(default_factory=dict)
    summaries: dict = field(default_factory=dict)
    slopes: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)
    sp_record: Optional[dict] = None
    config: Optional[object] = None

    def __post_init__(self):
        cs = list(self.c_values)
        if any(b <= a for a, b in zip(cs, cs[1:])):
            raise ValueError("c values must be strictly increasing")

    def completed(self) -> list:
        return [c for c in self.c_values if c in self.summaries]

    def column(self, key: str) -> np.ndarray:
        return np.array([self.summaries[c][key] for c in self.completed()])
