"""Exact linear flows and the splitting steps built on them.

Three linear evolutions appear in the coupled system:

* the half Klein-Gordon flow ``U±(t) = exp(∓ i t (M - c²))`` for the split
  matter fields,
* the free Schrödinger flow ``V±(t) = exp(± i t Δ/2)`` of the limit system,
* the wave flow ``∂ₜ²A = c² ΔA - c² G`` for the vector potential.

All three are diagonal in Fourier space and are applied exactly.  Nonlinear
terms are added by Strang splitting with an exponential (Lawson) midpoint rule
for the potential part, which keeps pure phase updates exactly unitary.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
import scipy.fft as sfft

from .spectral import (
    SpectralField,
    VectorField,
    divergence_residual,
    hc_from_xi2,
    leray_project,
)

__all__ = [
    "propagate_U",
    "propagate_V",
    "WavePair",
    "wave_flow",
    "wave_step",
    "phase_rotate",
    "duhamel_U_step",
    "dt_max",
    "resolve_dt",
    "source_projection_count",
]

DT_SAFETY = 0.1


def dt_max(c: float) -> float:
    """Largest admissible step, 0.1/c², resolving the rest-energy oscillation."""
    if not c > 0:
        raise ValueError("c must be positive")
    return DT_SAFETY / (c * c)


def resolve_dt(interval: float, dt: float) -> tuple[float, int]:
    """Shrink ``dt`` so that a whole number of steps spans ``interval``."""
    if not (interval > 0 and dt > 0):
        raise ValueError("interval and dt must be positive")
    steps = int(np.ceil(interval / dt * (1 - 1e-12)))
    steps = max(steps, 1)
    return interval / steps, steps


def _sign(sign) -> int:
    if sign in (1, "+"):
        return 1
    if sign in (-1, "-"):
        return -1
    raise ValueError(f"sign must be +1 or -1, got {sign!r}")


def propagate_U(f: SpectralField, t: float, sign, c: float) -> SpectralField:
    """Apply ``exp(∓ i t h_c(ξ))`` (upper sign for ``sign=+1``)."""
    if not c > 0:
        raise ValueError("c must be positive")
    s = _sign(sign)
    phase = np.exp(-1j * s * t * hc_from_xi2(f.grid.xi2, c))
    return SpectralField(f.grid, f.coeffs * phase, False)


def propagate_V(f: SpectralField, t: float, sign) -> SpectralField:
    """Apply ``exp(∓ i t |ξ|²/2)``, i.e. the flow of ``i∂ₜv = ∓Δv/2``."""
    s = _sign(sign)
    phase = np.exp(-0.5j * s * t * f.grid.xi2)
    return SpectralField(f.grid, f.coeffs * phase, False)


def phase_rotate(f: SpectralField, potential: SpectralField, tau: float) -> SpectralField:
    """``exp(-i τ V) f`` evaluated pointwise on the grid.

    The pointwise product is a unitary map of the sample vector and composes
    exactly (``τ₁`` then ``τ₂`` equals ``τ₁ + τ₂``), so the result keeps its
    Nyquist content: projecting it away after every call would cost O(dt) per
    unit time whenever the field reaches the grid cutoff.
    """
    vals = sfft.ifftn(f.coeffs, norm="ortho")
    pot = sfft.ifftn(potential.coeffs, norm="ortho").real
    out = sfft.fftn(vals * np.exp(-1j * tau * pot), norm="ortho")
    return SpectralField(f.grid, out, False)


# ---------------------------------------------------------------------------
# wave equation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WavePair:
    """Vector potential and its time derivative."""

    A: VectorField
    At: VectorField

    @property
    def grid(self):
        return self.A.grid

    def mode_energy(self, c: float) -> np.ndarray:
        """Per-mode energy |ξ|²|Â|² + |∂ₜÂ|²/c², summed over components."""
        g = self.grid
        return (g.xi2 * np.sum(np.abs(self.A.coeffs) ** 2, axis=0)
                + np.sum(np.abs(self.At.coeffs) ** 2, axis=0) / c**2)


def _wave_kernels(grid, c: float, dt: float):
    w = c * grid.xi_abs
    cw = np.cos(w * dt)
    safe = np.where(w > 0, w, 1.0)
    sinc = np.where(w > 0, np.sin(w * dt) / safe, dt)  # sin(w dt)/w
    wsin = w * np.sin(w * dt)  # w sin(w dt)
    # (1 - cos(w dt))/w², with its limit dt²/2 at w = 0
    one_minus = np.where(w > 0, 2.0 * np.sin(0.5 * w * dt) ** 2 / safe**2, 0.5 * dt * dt)
    return cw, sinc, wsin, one_minus


def wave_flow(w: WavePair, dt: float, c: float) -> WavePair:
    """Exact homogeneous wave flow over ``dt``; the mean drifts as Ā += dt·∂ₜĀ."""
    cw, sinc, wsin, _ = _wave_kernels(w.grid, c, dt)
    a, at = w.A.coeffs, w.At.coeffs
    return WavePair(
        VectorField(w.grid, cw * a + sinc * at),
        VectorField(w.grid, -wsin * a + cw * at),
    )


_projection_events = {"count": 0}


def source_projection_count() -> int:
    """Number of wave sources that had to be Leray-projected so far."""
    return _projection_events["count"]


def _ensure_divergence_free(F: VectorField, tol: float = 1e-10) -> VectorField:
    if divergence_residual(F) > tol:
        _projection_events["count"] += 1
        warnings.warn("wave source is not divergence-free; projecting", RuntimeWarning, stacklevel=3)
        return leray_project(F)
    return F


def wave_step(
    w: WavePair,
    F: VectorField | Callable[[float], VectorField],
    t0: float,
    dt: float,
    c: float,
) -> WavePair:
    """Advance ``∂ₜ²A = c²ΔA - c²F`` by ``dt`` with exact kernels.

    The source is frozen at the step midpoint (``F`` may be a callable of time
    or a fixed field); for frozen sources the Duhamel integral is evaluated in
    closed form, so a source constant in time is integrated exactly.
    """
    src = F(t0 + 0.5 * dt) if callable(F) else F
    src = _ensure_divergence_free(src)
    free = wave_flow(w, dt, c)
    _, sinc, _, one_minus = _wave_kernels(w.grid, c, dt)
    s = src.coeffs
    return WavePair(
        VectorField(w.grid, free.A.coeffs - c * c * one_minus * s),
        VectorField(w.grid, free.At.coeffs - c * c * sinc * s),
    )


# ---------------------------------------------------------------------------
# Duhamel step for the half Klein-Gordon flow
# ---------------------------------------------------------------------------

NonlinearTerm = Callable[[SpectralField, float], tuple[Optional[SpectralField], Optional[SpectralField]]]


def duhamel_U_step(psi: SpectralField, N: NonlinearTerm, t: float, dt: float, sign, c: float) -> SpectralField:
    """One Strang step for ``i∂ₜψ = ±(M - c²)ψ + Vψ + E``.

    ``N(psi, t)`` returns ``(V, E)``: a real potential acting multiplicatively
    and an additional forcing, either of which may be ``None``.  The nonlinear
    substep is the exponential midpoint rule

        ψ½   = e^{-i dt/2 V(ψ, t)} (ψ - i dt/2 E(ψ, t))
        ψnew = e^{-i dt V½} ψ - i dt e^{-i dt/2 V½} E½,   (V½, E½) = N(ψ½, t + dt/2)

    which reduces to an exact phase rotation when ``E`` vanishes and ``V`` is
    frozen.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    s = _sign(sign)
    half = propagate_U(psi, 0.5 * dt, s, c)
    t_mid = t + 0.5 * dt
    V0, E0 = N(half, t)
    stage = half
    if E0 is not None:
        stage = stage - E0 * (0.5j * dt)
    if V0 is not None:
        stage = phase_rotate(stage, V0, 0.5 * dt)
    Vh, Eh = N(stage, t_mid)
    new = phase_rotate(half, Vh, dt) if Vh is not None else half
    if Eh is not None:
        kick = phase_rotate(Eh, Vh, 0.5 * dt) if Vh is not None else Eh
        new = new - kick * (1j * dt)
    return propagate_U(new, 0.5 * dt, s, c)
