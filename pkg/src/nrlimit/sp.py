"""The limiting Schrödinger-Poisson system

    Δu = -|v⁺|² + |v⁻|²,        i∂ₜv± = ∓ Δv±/2 + u v±,

solved with the same torus conventions as the relativistic system: the mean
of the source is removed before inverting the Laplacian, and the Strang step
is a product of exactly unitary maps, so each ``‖v±‖₂`` is conserved to
roundoff.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .kgm import BlowupError
from .propagators import phase_rotate, propagate_V, resolve_dt
from .spectral import Grid, SpectralField

__all__ = [
    "SpState",
    "solve_u",
    "step_sp",
    "run_sp",
    "SpTrajectory",
    "initial_sp_state",
    "free_schrodinger_gaussian",
]


@dataclass(frozen=True, eq=False)
class SpState:
    v_plus: SpectralField
    v_minus: SpectralField
    t: float

    @property
    def grid(self) -> Grid:
        return self.v_plus.grid

    def l2(self) -> tuple[float, float]:
        dV = self.grid.cell_volume
        return (float(np.sqrt(np.sum(np.abs(self.v_plus.coeffs) ** 2) * dV)),
                float(np.sqrt(np.sum(np.abs(self.v_minus.coeffs) ** 2) * dV)))


def initial_sp_state(alpha: SpectralField, beta: SpectralField) -> SpState:
    """``v±(0) = ½(α ± iβ)``."""
    g = alpha.grid
    return SpState(SpectralField(g, 0.5 * (alpha.coeffs + 1j * beta.coeffs)),
                   SpectralField(g, 0.5 * (alpha.coeffs - 1j * beta.coeffs)), 0.0)


def solve_u(v_plus: SpectralField, v_minus: SpectralField) -> tuple[SpectralField, float]:
    """Potential ``u`` with ``Δu = -(ρ - ρ̄)``, ``ρ = |v⁺|² - |v⁻|²``.

    Returns ``(u, charge_defect)`` where ``charge_defect`` is the removed mean
    ``ρ̄``.
    """
    if v_plus.grid != v_minus.grid:
        raise ValueError("fields live on different grids")
    g = v_plus.grid
    pad = g.padder(1.5)
    vals = pad.lift(np.stack([v_plus.coeffs, v_minus.coeffs]))
    src = pad.drop_real(np.abs(vals[0]) ** 2 - np.abs(vals[1]) ** 2)
    mean = src[0, 0, 0].real
    src[0, 0, 0] = 0.0
    u = np.zeros_like(src)
    nz = g.xi2 > 0
    u[nz] = src[nz] / g.xi2[nz]  # Δ⁻¹(-src) = src/|ξ|²
    return SpectralField(g, u, True), float(mean / np.sqrt(g.n**3))


def step_sp(state: SpState, dt: float, blowup_factor: float = 10.0) -> SpState:
    """Strang step: half free flow, ``v± ← e^{-i dt u} v±``, half free flow.

    The potential only depends on ``|v±|²``, which the phase update leaves
    unchanged, so the middle substep is exact and the step is time-reversible
    (a negative ``dt`` undoes a positive one).
    """
    if dt == 0:
        raise ValueError("dt must be nonzero")
    vp = propagate_V(state.v_plus, 0.5 * dt, +1)
    vm = propagate_V(state.v_minus, 0.5 * dt, -1)
    u, _ = solve_u(vp, vm)
    vp = propagate_V(phase_rotate(vp, u, dt), 0.5 * dt, +1)
    vm = propagate_V(phase_rotate(vm, u, dt), 0.5 * dt, -1)
    new = SpState(vp, vm, state.t + dt)
    if not (np.all(np.isfinite(vp.coeffs)) and np.all(np.isfinite(vm.coeffs))):
        raise BlowupError(f"non-finite values at t={new.t:.6g}", state)
    n0, n1 = sum(state.l2()), sum(new.l2())
    if n0 > 0 and n1 > blowup_factor * n0:
        raise BlowupError(f"norm grew {n1 / n0:.3g}x in one step", state)
    return new


def _lp(values: np.ndarray, p: float, dV: float) -> float:
    return float((np.sum(np.abs(values) ** p) * dV) ** (1.0 / p))


@dataclass
class SpTrajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    samples: list = field(default_factory=list)
    l2: list = field(default_factory=list)
    grad_l2: list = field(default_factory=list)
    l6: list = field(default_factory=list)
    final: Optional[SpState] = None
    dt: float = 0.0
    steps: int = 0

    def as_arrays(self) -> dict:
        return {"t": np.asarray(self.times), "l2": np.asarray(self.l2),
                "grad_l2": np.asarray(self.grad_l2), "l6": np.asarray(self.l6)}

    def gronwall_envelope(self) -> np.ndarray:
        """``‖∇v±(0)‖₂ exp(Σ∓ ‖v∓(0)‖₂ ∫₀ᵗ ‖v∓‖₆)`` at every sample, per component.

        Time integrals are upper Riemann sums (larger endpoint on each sample
        interval), so for monotone stretches the envelope errs on the safe side.
        """
        t = np.asarray(self.times)
        l2 = np.asarray(self.l2)
        l6 = np.asarray(self.l6)
        g0 = np.asarray(self.grad_l2)[0]
        dt = np.diff(t)
        step_max = np.maximum(l6[1:], l6[:-1]) * dt[:, None]
        integral = np.vstack([np.zeros((1, 2)), np.cumsum(step_max, axis=0)])
        exponent = l2[0, 0] * integral[:, 0] + l2[0, 1] * integral[:, 1]
        return g0[None, :] * np.exp(exponent)[:, None]


def _record(traj: SpTrajectory, s: SpState, keep_states: bool, observer):
    g = s.grid
    dV = g.cell_volume
    traj.times.append(s.t)
    traj.l2.append(s.l2())
    grads, l6 = [], []
    for v in (s.v_plus, s.v_minus):
        grads.append(float(np.sqrt(np.sum(g.xi2 * np.abs(v.coeffs) ** 2) * dV)))
        l6.append(_lp(sfft.ifftn(v.coeffs, norm="ortho"), 6, dV))
    traj.grad_l2.append(tuple(grads))
    traj.l6.append(tuple(l6))
    if keep_states:
        traj.states.append(s)
    if observer is not None:
        traj.samples.append(observer(s))


def run_sp(
    state: SpState,
    T: float,
    dt: float,
    cadence: int = 50,
    keep_states: bool = False,
    observer: Optional[Callable[[SpState], object]] = None,
) -> SpTrajectory:
    """Advance by ``T`` (which may be negative) recording norms at ``cadence + 1`` instants."""
    if T == 0 or dt <= 0:
        raise ValueError("T must be nonzero and dt positive")
    interval = abs(T) / cadence
    dt_eff, per = resolve_dt(interval, dt)
    sgn = 1.0 if T > 0 else -1.0
    traj = SpTrajectory(dt=dt_eff)
    t0 = state.t
    _record(traj, state, keep_states, observer)
    for j in range(cadence):
        for _ in range(per):
            state = step_sp(state, sgn * dt_eff)
            traj.steps += 1
        state = replace(state, t=t0 + sgn * (j + 1) * interval)
        _record(traj, state, keep_states, observer)
    traj.final = state
    return traj


def free_schrodinger_gaussian(grid: Grid, t: float, width: float = 1.0, center=None,
                              wavevector=(0.0, 0.0, 0.0), sign: int = 1,
                              images: int = 1) -> np.ndarray:
    """Closed-form solution of ``i∂ₜv = ∓Δv/2`` from a modulated Gaussian.

    Starting from ``exp(-|x-x0|²/(2w²) + i k·(x-x0))``, the solution is

        (w²/(w² + i s t))^{3/2} exp(-|x-x0-s k t|²/(2(w² + i s t)) + i k·(x-x0) - i s |k|² t/2)

    with ``s = ±1``; periodic images within ``images`` boxes are summed.
    """
    if center is None:
        center = (0.5 * grid.L,) * 3
    s = 1 if sign in (1, "+") else -1
    k = np.asarray(wavevector, dtype=float)
    z = width**2 + 1j * s * t
    x = grid.mesh()
    out = np.zeros(grid.shape, dtype=complex)
    shifts = range(-images, images + 1)
    for a in shifts:
        for b in shifts:
            for cc in shifts:
                d = [x[i] - center[i] + grid.L * off for i, off in enumerate((a, b, cc))]
                r2 = sum((d[i] - s * k[i] * t) ** 2 for i in range(3))
                ph = sum(k[i] * d[i] for i in range(3)) - 0.5 * s * np.dot(k, k) * t
                out = out + np.exp(-0.5 * r2 / z + 1j * ph)
    return (width**2 / z) ** 1.5 * out
