"""Batch runner: configuration, c-sweeps, output files and baseline comparison.

A run is described by a JSON document (see ``docs/config.md`` for every key
and default).  ``run`` dispatches on ``mode``:

``kgm_sweep``    coupled system at every c against one limit-system reference
``free_kg``      couplings off, compared with the free Schrödinger flow
``sp_only``      the limit system alone (conservation and time reversal)
``estimate_lab`` the symbol/kernel checks of :mod:`nrlimit.estimates`

Every run produces a diagnostics CSV with a fixed column order, a summary
JSON with the measured constants and a pass/fail entry per acceptance gate,
and optionally SVG plots.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from multiprocessing import get_context
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from . import estimates
from .diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    KgmRecorder,
    SweepResult,
    convergence_error,
    fit_slope,
    strichartz_trackers,
)
from .kgm import (
    BlowupError,
    DataSpec,
    GaussianBump,
    KgmOptions,
    TorusFitError,
    VortexBump,
    build_initial_data,
    free_kg_exact,
    limit_data,
    run_kgm,
)
from .propagators import dt_max, propagate_V
from .sp import SpState, initial_sp_state, run_sp
from .spectral import Grid, SpectralField

__all__ = [
    "ConfigError",
    "RunConfig",
    "parse_config",
    "load_config",
    "run",
    "run_sweep",
    "run_free",
    "run_sp_only",
    "run_estimates",
    "emit_outputs",
    "evaluate_acceptance",
    "compare_csv",
    "CompareResult",
    "worker_count",
]

log = logging.getLogger(__name__)

MODES = ("kgm_sweep", "sp_only", "free_kg", "estimate_lab")


class ConfigError(ValueError):
    """Invalid run configuration; the message starts with the offending field path."""


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EstimateConfig:
    kernel_mus: tuple = (0.25, 1.0, 4.0, 16.0)
    kernel_t_max_exponent: int = 10
    commutator_samples: int = 100_000
    commutator_c_values: tuple = (1.0, 4.0, 16.0, 64.0)
    delta_c_values: tuple = (1.0, 10.0)
    delta_random_samples: int = 10_000
    mestimate_c_values: tuple = (1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class RunConfig:
    mode: str = "kgm_sweep"
    n: int = 32
    L: float = 16.0
    T: float = 0.5
    dt: Optional[float] = None          # None means the automatic policy 0.1/c²
    c_values: tuple = (2.0, 4.0, 8.0, 16.0)
    data: DataSpec = DataSpec.electron_positron(a0=VortexBump(0.3, 1.0))
    coupled: bool = True
    formulation: str = "commutator"
    cadence: int = 50
    r_exponents: tuple = (1.0, 1.5)
    output_dir: str = "nrlimit_out"
    emit_plots: bool = False
    seed: int = 0
    estimates: EstimateConfig = EstimateConfig()

    @property
    def grid(self) -> Grid:
        return Grid(self.n, self.L)

    def dt_for(self, c: float) -> float:
        return dt_max(c) if self.dt is None else self.dt

    def fingerprint(self) -> str:
        """Hash of everything that affects the numbers (not the output location)."""
        d = asdict(self)
        d.pop("output_dir")
        d.pop("emit_plots")
        blob = json.dumps(d, default=str, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


_TOP_KEYS = {"mode", "seed", "grid", "time", "sweep", "data", "model", "diagnostics", "output", "estimates"}
_SECTION_KEYS = {
    "grid": {"n", "L"},
    "time": {"T", "dt_policy"},
    "sweep": {"c_values"},
    "model": {"coupled", "formulation"},
    "diagnostics": {"cadence", "r_exponents"},
    "output": {"directory", "emit_plots"},
    "data": {"preset", "electron", "positron", "a0", "a1", "n_bumps", "with_field"},
    "estimates": {f.name for f in EstimateConfig.__dataclass_fields__.values()},
}
_BUMP_KEYS = {"amplitude", "width", "center", "wavevector"}
_VORTEX_KEYS = {"amplitude", "width", "axis", "center"}


def _fail(path: str, msg: str):
    raise ConfigError(f"{path}: {msg}")


def _check_keys(obj, allowed: set, path: str):
    if not isinstance(obj, dict):
        _fail(path, "expected an object")
    extra = sorted(set(obj) - allowed)
    if extra:
        _fail(path, f"unknown key(s) {', '.join(extra)}")


def _number(v, path: str, positive: bool = False, integer: bool = False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        _fail(path, f"expected a number, got {v!r}")
    if integer and int(v) != v:
        _fail(path, f"expected an integer, got {v!r}")
    if not math.isfinite(v):
        _fail(path, "must be finite")
    if positive and not v > 0:
        _fail(path, f"must be positive, got {v!r}")
    return int(v) if integer else float(v)


def _vec3(v, path: str):
    if not isinstance(v, (list, tuple)) or len(v) != 3:
        _fail(path, "expected a list of three numbers")
    return tuple(_number(x, f"{path}[{i}]") for i, x in enumerate(v))


def _amplitude(v, path: str) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            _fail(path, "complex amplitudes are written [re, im]")
        return complex(_number(v[0], f"{path}[0]"), _number(v[1], f"{path}[1]"))
    return complex(_number(v, path))


def _bump(obj, path: str, default: GaussianBump) -> Optional[GaussianBump]:
    if obj is None:
        return None
    _check_keys(obj, _BUMP_KEYS, path)
    return GaussianBump(
        _amplitude(obj.get("amplitude", default.amplitude), f"{path}.amplitude"),
        _number(obj.get("width", default.width), f"{path}.width", positive=True),
        None if obj.get("center") is None else _vec3(obj["center"], f"{path}.center"),
        _vec3(obj.get("wavevector", default.wavevector), f"{path}.wavevector"),
    )


def _vortex(obj, path: str) -> Optional[VortexBump]:
    if obj is None:
        return None
    _check_keys(obj, _VORTEX_KEYS, path)
    axis = _vec3(obj.get("axis", (0.0, 0.0, 1.0)), f"{path}.axis")
    if not any(axis):
        _fail(f"{path}.axis", "must be nonzero")
    return VortexBump(
        _number(obj.get("amplitude", 0.0), f"{path}.amplitude"),
        _number(obj.get("width", 1.0), f"{path}.width", positive=True),
        axis,
        None if obj.get("center") is None else _vec3(obj["center"], f"{path}.center"),
    )


def _data(obj, seed: int, L: float) -> DataSpec:
    if obj is None:
        return RunConfig.data
    _check_keys(obj, _SECTION_KEYS["data"], "data")
    preset = obj.get("preset", "electron_positron")
    if preset == "random":
        for k in ("electron", "positron", "a0", "a1"):
            if k in obj:
                _fail(f"data.{k}", "not allowed with preset 'random'")
        n_bumps = _number(obj.get("n_bumps", 2), "data.n_bumps", positive=True, integer=True)
        with_field = obj.get("with_field", True)
        if not isinstance(with_field, bool):
            _fail("data.with_field", "expected true or false")
        return DataSpec.random(seed, n_bumps, L, with_field)
    if preset != "electron_positron":
        _fail("data.preset", f"unknown preset {preset!r} (electron_positron | random)")
    for k in ("n_bumps", "with_field"):
        if k in obj:
            _fail(f"data.{k}", "only allowed with preset 'random'")
    electron = _bump(obj.get("electron", {}), "data.electron", GaussianBump(1.0, 1.0))
    if electron is None:
        _fail("data.electron", "the electron bump is required")
    positron = _bump(obj.get("positron", {}), "data.positron", GaussianBump(0.5, 1.2))
    a0 = _vortex(obj.get("a0", {"amplitude": 0.3, "width": 1.0}), "data.a0")
    a1 = _vortex(obj.get("a1"), "data.a1")
    return DataSpec.electron_positron(electron, positron, a0, a1, seed)


def parse_config(text: str) -> RunConfig:
    """Validate a JSON run description and fill in defaults.

    Raises :class:`ConfigError` with a field path for malformed documents,
    unknown keys and violated invariants.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"<document>: malformed JSON ({exc})") from None
    _check_keys(doc, _TOP_KEYS, "<document>")
    for sec, allowed in _SECTION_KEYS.items():
        if sec in doc and sec != "data":
            _check_keys(doc[sec], allowed, sec)
    d = RunConfig()
    mode = doc.get("mode", d.mode)
    if mode not in MODES:
        _fail("mode", f"unknown mode {mode!r} ({' | '.join(MODES)})")
    seed = _number(doc.get("seed", d.seed), "seed", integer=True)
    grid = doc.get("grid", {})
    n = _number(grid.get("n", d.n), "grid.n", positive=True, integer=True)
    if n % 2 or n < 8:
        _fail("grid.n", f"must be even and at least 8, got {n}")
    L = _number(grid.get("L", d.L), "grid.L", positive=True)
    tm = doc.get("time", {})
    T = _number(tm.get("T", d.T), "time.T", positive=True)
    policy = tm.get("dt_policy", "auto")
    dt = None if policy == "auto" else _number(policy, "time.dt_policy", positive=True)
    cs = doc.get("sweep", {}).get("c_values", list(d.c_values))
    if not isinstance(cs, list) or not cs:
        _fail("sweep.c_values", "expected a non-empty list")
    cs = tuple(_number(c, f"sweep.c_values[{i}]", positive=True) for i, c in enumerate(cs))
    if any(b <= a for a, b in zip(cs, cs[1:])):
        _fail("sweep.c_values", "c_values not increasing")
    model = doc.get("model", {})
    coupled = model.get("coupled", True if mode != "free_kg" else False)
    if not isinstance(coupled, bool):
        _fail("model.coupled", "expected true or false")
    if mode == "free_kg" and coupled:
        _fail("model.coupled", "free_kg mode runs with couplings off")
    formulation = model.get("formulation", d.formulation)
    if formulation not in ("commutator", "alternative"):
        _fail("model.formulation", f"unknown formulation {formulation!r}")
    diag = doc.get("diagnostics", {})
    cadence = _number(diag.get("cadence", d.cadence), "diagnostics.cadence", positive=True, integer=True)
    if dt is not None and T / cadence < dt * (1 - 1e-12):
        _fail("diagnostics.cadence", f"sample interval T/cadence = {T / cadence:g} is shorter than dt = {dt:g}")
    rex = diag.get("r_exponents", list(d.r_exponents))
    if not isinstance(rex, list) or not rex:
        _fail("diagnostics.r_exponents", "expected a non-empty list")
    rex = tuple(_number(r, f"diagnostics.r_exponents[{i}]", positive=True) for i, r in enumerate(rex))
    if any(r < 1 for r in rex):
        _fail("diagnostics.r_exponents", "exponents must be at least 1")
    out = doc.get("output", {})
    directory = out.get("directory", d.output_dir)
    if not isinstance(directory, str) or not directory:
        _fail("output.directory", "expected a path string")
    plots = out.get("emit_plots", d.emit_plots)
    if not isinstance(plots, bool):
        _fail("output.emit_plots", "expected true or false")
    est = _estimates(doc.get("estimates", {}))
    data = _data(doc.get("data"), seed, L)
    return RunConfig(mode, n, L, T, dt, cs, data, coupled, formulation, cadence, rex,
                     directory, plots, seed, est)


def _estimates(obj) -> EstimateConfig:
    d = EstimateConfig()
    vals = {}
    for name in EstimateConfig.__dataclass_fields__:
        path = f"estimates.{name}"
        if name not in obj:
            continue
        v = obj[name]
        default = getattr(d, name)
        if isinstance(default, tuple):
            if not isinstance(v, list) or not v:
                _fail(path, "expected a non-empty list")
            vals[name] = tuple(_number(x, f"{path}[{i}]", positive=True) for i, x in enumerate(v))
        else:
            vals[name] = _number(v, path, positive=True, integer=True)
    return EstimateConfig(**{**asdict(d), **vals})


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"<file {path}>: {exc.strerror}") from None
    return parse_config(text)


def worker_count(tasks: int) -> int:
    """Workers for ``tasks`` independent runs, capped by ``NRLIMIT_THREADS``."""
    raw = os.environ.get("NRLIMIT_THREADS")
    cap = os.cpu_count() or 1
    if raw is not None:
        try:
            cap = int(raw)
        except ValueError:
            raise ConfigError(f"NRLIMIT_THREADS: expected a positive integer, got {raw!r}") from None
        if cap < 1:
            raise ConfigError(f"NRLIMIT_THREADS: expected a positive integer, got {raw!r}")
    return max(1, min(cap, tasks))


# ---------------------------------------------------------------------------
# runs
# ---------------------------------------------------------------------------


def _sp_reference(cfg: RunConfig, alpha: SpectralField, beta: SpectralField):
    """Limit-system trajectory at the finest step of the sweep, states kept at every sample."""
    dt = cfg.dt if cfg.dt is not None else dt_max(max(cfg.c_values))
    return run_sp(initial_sp_state(alpha, beta), cfg.T, dt, cadence=cfg.cadence, keep_states=True)


def _kgm_task(cfg: RunConfig, c: float, reference: Optional[list]) -> dict:
    """One c of a sweep; exceptions of the numerical kind are reported, not raised."""
    grid = cfg.grid
    options = KgmOptions(coupled=cfg.coupled, formulation=cfg.formulation)
    refs = None
    if reference is not None:
        refs = [SpState(SpectralField(grid, p), SpectralField(grid, m), t) for t, p, m in reference]
    recorder = KgmRecorder(refs, options, cfg.r_exponents)
    recorder.record.metadata.update(c=c, n=cfg.n, L=cfg.L, spec=cfg.data.fingerprint())
    start = time.perf_counter()
    error = None
    info = {}
    traj = None
    try:
        state = build_initial_data(cfg.data, c, grid, coupled=cfg.coupled)
        info = dict(state.info)
        traj = run_kgm(state, cfg.T, cfg.dt_for(c), cfg.cadence, recorder, options)
    except (BlowupError, FloatingPointError, ArithmeticError, TorusFitError, RuntimeError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    recorder.record.metadata.update(
        dt=traj.dt if traj else None, steps=traj.steps if traj else None,
        runtime_s=time.perf_counter() - start)
    info.pop("spec", None)
    return {"c": c, "record": recorder.record, "error": error, "info": info}


def _free_task(cfg: RunConfig, c: float) -> dict:
    """Couplings off: compare ψ±(t) with V±(t)ψ±(0) and with the exact free flow."""
    grid = cfg.grid
    options = KgmOptions(coupled=False)
    alpha, beta = limit_data(cfg.data, grid)
    v0 = initial_sp_state(alpha, beta)
    recorder = KgmRecorder(None, options, cfg.r_exponents)
    recorder.record.metadata.update(c=c, n=cfg.n, L=cfg.L, spec=cfg.data.fingerprint())
    h1 = lambda a: float(np.sqrt(np.sum((1 + grid.xi2) * np.abs(a) ** 2) * grid.cell_volume))

    def observer(s):
        vals = recorder(s)
        vp = propagate_V(v0.v_plus, s.t, +1)
        vm = propagate_V(v0.v_minus, s.t, -1)
        _, ep, em = free_kg_exact(alpha, beta, s.t, c)
        extra = {
            "h1_err_p": h1(s.psi_plus.coeffs - vp.coeffs),
            "h1_err_m": h1(s.psi_minus.coeffs - vm.coeffs),
            "exact_err": max(h1(s.psi_plus.coeffs - ep.coeffs), h1(s.psi_minus.coeffs - em.coeffs)),
        }
        for k, v in extra.items():
            recorder.record.series.setdefault(k, []).append(v)
        return vals

    start = time.perf_counter()
    error = None
    traj = None
    try:
        state = build_initial_data(cfg.data, c, grid, coupled=False)
        traj = run_kgm(state, cfg.T, cfg.dt_for(c), cfg.cadence, observer, options)
    except (BlowupError, FloatingPointError, TorusFitError, RuntimeError) as exc:
        error = f"{type(exc).__name__}: {exc}"
    recorder.record.metadata.update(
        dt=traj.dt if traj else None, steps=traj.steps if traj else None,
        runtime_s=time.perf_counter() - start)
    return {"c": c, "record": recorder.record, "error": error, "info": {}}


def _dispatch(cfg: RunConfig, fn, args_per_c: list) -> list:
    workers = worker_count(len(args_per_c))
    if workers == 1:
        return [fn(*args) for args in args_per_c]
    with ProcessPoolExecutor(max_workers=workers, mp_context=get_context("spawn")) as pool:
        futures = [pool.submit(fn, *args) for args in args_per_c]
        return [f.result() for f in futures]


def _summarize(record: DiagnosticsRecord, with_reference: bool) -> dict:
    e = record["energy"]
    q = record["charge"]
    X, Y, Z = strichartz_trackers(record)
    out = {
        "energy_drift_max": float(np.max(np.abs(e - e[0])) / abs(e[0])),
        "charge_drift_max": float(np.max(np.abs(q - q[0])) / max(abs(q[0]), 1e-300)),
        "div_A_max": record.sup("div_A"),
        "X_T": float(X[-1]),
        "Y_T": float(Y[-1]),
        "Z_T": float(Z[-1]),
        "psi_linf_l2": record.sup("l2_psi_p") + record.sup("l2_psi_m"),
        "minv_a0phi_h1": record.sup("minv_a0phi_h1"),
        "R_l1h1": float(record.running_integral("R_h1")[-1]),
        "t_final": float(record.t[-1]),
    }
    if with_reference:
        out.update(convergence_error(record))
    elif "h1_err_p" in record.series:
        out["h1_err_p"] = float(record["h1_err_p"][-1])
        out["h1_err_m"] = float(record["h1_err_m"][-1])
        out["exact_err_max"] = record.sup("exact_err")
    return out


def _collect(cfg: RunConfig, results: list, with_reference: bool, sp_record=None) -> SweepResult:
    sweep = SweepResult(list(cfg.c_values), sp_record=sp_record, config=cfg)
    for res in results:
        c = res["c"]
        rec = res["record"]
        sweep.records[c] = rec
        if res["error"] is not None:
            sweep.failures[c] = res["error"]
            log.warning("c=%g failed: %s", c, res["error"])
            continue
        summary = _summarize(rec, with_reference)
        summary.update({k: v for k, v in res["info"].items() if isinstance(v, (int, float))})
        summary.update(dt=rec.metadata.get("dt"), steps=rec.metadata.get("steps"))
        sweep.summaries[c] = summary
    done = sweep.completed()
    if len(done) >= 2:
        keys = ["h1_err_p", "h1_err_m", "a0_u_h1dot_err", "R_l1h1", "minv_a0phi_h1"]
        keys += [k for k in sweep.summaries[done[0]] if k.startswith("lap_a0_u_err_r")]
        for k in keys:
            if k in sweep.summaries[done[0]]:
                vals = sweep.column(k)
                if np.all(vals > 0):
                    slope, resid = fit_slope(done, vals)
                    sweep.slopes[k] = {"slope": slope, "residual": resid}
    return sweep


def run_sweep(cfg: RunConfig) -> SweepResult:
    """Coupled system at every c against a single limit-system reference."""
    grid = cfg.grid
    alpha, beta = limit_data(cfg.data, grid)
    sp = _sp_reference(cfg, alpha, beta)
    l2 = np.asarray(sp.l2)
    sp_record = {
        "dt": sp.dt, "steps": sp.steps,
        "l2_drift_max": float(np.max(np.abs(l2 - l2[0]) / l2[0])),
    }
    reference = [(s.t, s.v_plus.coeffs, s.v_minus.coeffs) for s in sp.states]
    results = _dispatch(cfg, _kgm_task, [(cfg, c, reference) for c in cfg.c_values])
    return _collect(cfg, results, True, sp_record)


def run_free(cfg: RunConfig) -> SweepResult:
    """Free Klein-Gordon at every c against the free Schrödinger flow."""
    results = _dispatch(cfg, _free_task, [(cfg, c) for c in cfg.c_values])
    return _collect(cfg, results, False)


def run_sp_only(cfg: RunConfig) -> dict:
    """Limit system forward over T and back: L² conservation and reversal error."""
    alpha, beta = limit_data(cfg.data, cfg.grid)
    dt = cfg.dt if cfg.dt is not None else dt_max(max(cfg.c_values))
    s0 = initial_sp_state(alpha, beta)
    fwd = run_sp(s0, cfg.T, dt, cadence=cfg.cadence)
    back = run_sp(fwd.final, -cfg.T, dt, cadence=cfg.cadence)
    l2 = np.asarray(fwd.l2 + back.l2[1:])
    dv = np.concatenate([s0.v_plus.coeffs - back.final.v_plus.coeffs,
                         s0.v_minus.coeffs - back.final.v_minus.coeffs])
    scale = np.sqrt(np.sum(np.abs(s0.v_plus.coeffs) ** 2 + np.abs(s0.v_minus.coeffs) ** 2))
    env = fwd.gronwall_envelope()
    return {
        "trajectory": fwd,
        "dt": fwd.dt,
        "steps": fwd.steps,
        "l2_drift_max": float(np.max(np.abs(l2 - l2[0]) / l2[0])),
        "reversal_error": float(np.sqrt(np.sum(np.abs(dv) ** 2)) / scale),
        "gronwall_ok": bool(np.all(np.asarray(fwd.grad_l2) <= env * (1 + 1e-12))),
    }


def run_estimates(cfg: RunConfig) -> list:
    """All estimate-lab checks with the parameters of the ``estimates`` section."""
    e = cfg.estimates
    reports = [
        estimates.alpha_derivatives_check(np.logspace(-3, 3, 61)),
        _sphere_check(),
        estimates.kernel_scaling_check(
            [(1.0, 2.0, 1.0, 0.5), (4.0, 4.0, 0.5, 3.0), (0.5, 10.0, 0.1, 1.0),
             (2.0, 1.0, 8.0, 4.0), (16.0, 3.0, 0.25, 10.0)]),
        estimates.kernel_decay_check(e.kernel_mus, 1.0, tuple(range(0, e.kernel_t_max_exponent + 1))),
        estimates.delta_lemma_check("wave", 1.0, seed=cfg.seed),
        estimates.delta_rho_random_check("wave", 1.0, e.delta_random_samples, cfg.seed),
    ]
    for c in e.delta_c_values:
        reports.append(estimates.delta_lemma_check("klein-gordon", c, seed=cfg.seed))
        reports.append(estimates.delta_rho_random_check("klein-gordon", c, e.delta_random_samples, cfg.seed))
    reports.append(estimates.commutator_symbol_check(e.commutator_c_values, e.commutator_samples, cfg.seed))
    reports.append(estimates.mestimates_check(e.mestimate_c_values))
    return reports


def _sphere_check(tol: float = 1e-6) -> "estimates.CheckReport":
    rows = []
    worst = 0.0
    for rho in (0.5, 2.0, 10.0):
        exact = float(estimates.sphere_transform(rho))
        quad = estimates.sphere_transform_quadrature(rho)
        err = abs(quad - exact)
        worst = max(worst, err)
        rows.append({"rho": rho, "closed_form": exact, "quadrature": quad.real, "abs_err": err})
    return estimates.CheckReport("sphere_transform", worst <= tol, {"max_abs_err": worst}, rows)


# ---------------------------------------------------------------------------
# acceptance gates
# ---------------------------------------------------------------------------


def _gate(passed: bool, **detail) -> dict:
    return {"passed": bool(passed), **detail}


def _strictly_decreasing(v) -> bool:
    v = np.asarray(v)
    return bool(v.size >= 2 and np.all(np.diff(v) < 0))


def evaluate_acceptance(result, mode: str) -> dict:
    """Pass/fail per acceptance gate for a finished run of the given mode."""
    if mode == "estimate_lab":
        return {rep.name: _gate(rep.passed, **rep.measured) for rep in result}
    if mode == "sp_only":
        return {
            "sp_l2_conservation": _gate(result["l2_drift_max"] <= 1e-10, measured=result["l2_drift_max"], bound=1e-10),
            "sp_time_reversal": _gate(result["reversal_error"] <= 1e-8, measured=result["reversal_error"], bound=1e-8),
            "sp_gradient_envelope": _gate(result["gronwall_ok"]),
        }
    sweep: SweepResult = result
    gates = {"all_c_completed": _gate(not sweep.failures, failures={str(k): v for k, v in sweep.failures.items()})}
    cs = sweep.completed()
    if len(cs) < 2:
        gates["enough_c_values"] = _gate(False, completed=cs)
        return gates
    col = sweep.column
    if mode == "free_kg":
        for tag in ("p", "m"):
            v = col(f"h1_err_{tag}")
            ratios = (v[1:] / v[:-1]).tolist()
            gates[f"free_rate_{tag}"] = _gate(all(0.20 <= r <= 0.32 for r in ratios), ratios=ratios, band=[0.20, 0.32])
        ex = float(np.max(col("exact_err_max")))
        gates["free_stepper_exact"] = _gate(ex <= 1e-10, measured=ex, bound=1e-10)
        return gates
    for k in ["h1_err_p", "h1_err_m", "a0_u_h1dot_err"] + [k for k in sweep.summaries[cs[0]] if k.startswith("lap_a0_u_err_r")]:
        v = col(k)
        gates[f"convergence_{k}"] = _gate(_strictly_decreasing(v) and v[-1] <= 0.25 * v[0],
                                          values=v.tolist(), last_over_first=float(v[-1] / v[0]))
    for k in ("R_l1h1", "minv_a0phi_h1"):
        v = col(k)
        gates[f"decay_{k}"] = _gate(_strictly_decreasing(v), values=v.tolist())
    v = col("minv_a0phi_h1")
    ratios = (v[1:] / v[:-1]).tolist()
    halving = all(0.5 * 0.7 <= r <= 0.5 * 1.3 for r in ratios)
    gates["decay_minv_a0phi_halving"] = _gate(halving, ratios=ratios, band=[0.35, 0.65])
    ed = col("energy_drift_max")
    gates["energy_conservation"] = _gate(bool(np.all(ed <= 1e-5)), values=ed.tolist(), bound=1e-5)
    dv = col("div_A_max")
    gates["divergence_free_A"] = _gate(bool(np.all(dv <= 1e-12)), max=float(dv.max()), bound=1e-12)
    if sweep.sp_record is not None:
        d = sweep.sp_record["l2_drift_max"]
        gates["sp_l2_conservation"] = _gate(d <= 1e-10, measured=d, bound=1e-10)
    for k in ("X_T", "Y_T", "Z_T", "psi_linf_l2"):
        v = col(k)
        spread = float(v.max() / v.min())
        growth = float(v[-1] / v[0])
        gates[f"bounded_{k}"] = _gate(spread <= 3.0 and growth <= 1.5, values=v.tolist(),
                                      spread=spread, last_over_first=growth)
    return gates


# ---------------------------------------------------------------------------
# outputs
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    return "%.17g" % v


def csv_rows(sweep: SweepResult, cfg: RunConfig) -> list:
    """Rows of the diagnostics CSV, one per (c, t), in the documented column order."""
    rows = []
    base = cfg.fingerprint()
    for c in sweep.c_values:
        rec = sweep.records.get(c)
        if rec is None or not rec.times:
            continue
        n = len(rec.times)
        e = rec["energy"]
        X, Y, Z = strichartz_trackers(rec)
        R = rec.running_integral("R_h1")
        zeros = np.zeros(n)
        get = lambda k: rec[k][:n] if k in rec.series else zeros
        cols = {
            "c": np.full(n, c), "t": rec.t, "energy": e,
            "energy_drift_rel": np.abs(e - e[0]) / abs(e[0]),
            "l2_psi_p": get("l2_psi_p"), "l2_psi_m": get("l2_psi_m"),
            "h1_err_p": get("h1_err_p"), "h1_err_m": get("h1_err_m"),
            "lap_a0_u_err_r1": get("lap_a0_u_err_r1"), "lap_a0_u_err_r32": get("lap_a0_u_err_r32"),
            "a0_u_h1dot_err": get("a0_u_h1dot_err"), "X_T": X, "Y_T": Y, "Z_T": Z,
            "R_l1h1": R, "minv_a0phi_h1": get("minv_a0phi_h1"), "charge_defect": get("charge_defect"),
        }
        run_id = f"{cfg.mode}-{base}-c{c:g}"
        for i in range(n):
            rows.append([run_id] + [_fmt(cols[k][i]) for k in CSV_COLUMNS[1:]])
    return rows


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


def emit_outputs(result, cfg: RunConfig, gates: dict) -> dict:
    """Write CSV, summary JSON and (optionally) SVG plots; returns the paths written."""
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out}: {exc.strerror}") from exc
    paths = {}
    summary: dict[str, Any] = {
        "mode": cfg.mode,
        "config_fingerprint": cfg.fingerprint(),
        "data_fingerprint": cfg.data.fingerprint(),
        "acceptance": gates,
        "all_passed": all(g["passed"] for g in gates.values()),
    }
    try:
        if cfg.mode in ("kgm_sweep", "free_kg"):
            paths["csv"] = out / "diagnostics.csv"
            _write_csv(paths["csv"], CSV_COLUMNS, csv_rows(result, cfg))
            summary.update(c_values=list(result.c_values), per_c=result.summaries, slopes=result.slopes,
                           failures=result.failures, sp_reference=result.sp_record)
            if cfg.emit_plots:
                paths.update(_plots(result, out))
        elif cfg.mode == "sp_only":
            traj = result["trajectory"]
            paths["csv"] = out / "sp.csv"
            rows = [[_fmt(t), _fmt(a[0]), _fmt(a[1]), _fmt(g[0]), _fmt(g[1]), _fmt(s[0]), _fmt(s[1])]
                    for t, a, g, s in zip(traj.times, traj.l2, traj.grad_l2, traj.l6)]
            _write_csv(paths["csv"], ["t", "l2_v_p", "l2_v_m", "grad_l2_v_p", "grad_l2_v_m", "l6_v_p", "l6_v_m"], rows)
            summary.update({k: v for k, v in result.items() if k != "trajectory"})
        else:
            paths["summary_txt"] = estimates.write_reports(result, out)
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(_jsonable(summary), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise OSError(f"writing outputs under {out} failed: {exc}") from exc
    return paths


def _plots(sweep: SweepResult, out: Path) -> dict:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    paths = {}
    cs = sweep.completed()
    if cs:
        fig, ax = plt.subplots(figsize=(5, 4))
        for k in ("h1_err_p", "h1_err_m", "a0_u_h1dot_err", "lap_a0_u_err_r32", "minv_a0phi_h1", "R_l1h1"):
            if k in sweep.summaries[cs[0]]:
                ax.loglog(cs, sweep.column(k), "o-", label=k)
        ax.set_xlabel("c")
        ax.set_ylabel("error / size")
        ax.legend(fontsize=7)
        paths["plot_errors"] = out / "errors_vs_c.svg"
        fig.savefig(paths["plot_errors"], metadata={"Date": None})
        plt.close(fig)
    fig, ax = plt.subplots(figsize=(5, 4))
    for c, rec in sweep.records.items():
        if rec.times:
            ax.plot(rec.t, rec["energy"], label=f"c={c:g}")
    ax.set_xlabel("t")
    ax.set_ylabel("energy")
    ax.legend(fontsize=7)
    paths["plot_energy"] = out / "energy_vs_t.svg"
    fig.savefig(paths["plot_energy"], metadata={"Date": None})
    plt.close(fig)
    return paths


def run(cfg: RunConfig):
    """Execute the configured mode; returns ``(result, gates, paths)``."""
    worker_count(1)  # reject a malformed NRLIMIT_THREADS before any work starts
    if cfg.mode == "kgm_sweep":
        result = run_sweep(cfg)
    elif cfg.mode == "free_kg":
        result = run_free(cfg)
    elif cfg.mode == "sp_only":
        result = run_sp_only(cfg)
    else:
        result = run_estimates(cfg)
    gates = evaluate_acceptance(result, cfg.mode)
    paths = emit_outputs(result, cfg, gates)
    return result, gates, paths


# ---------------------------------------------------------------------------
# baseline comparison
# ---------------------------------------------------------------------------


@dataclass
class CompareResult:
    rows: int
    mismatches: list = field(default_factory=list)
    structural: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.structural is None and not self.mismatches


def compare_csv(baseline, new, rtol: float = 1e-9, atol: float = 0.0) -> CompareResult:
    """Cell-by-cell comparison of two diagnostics CSVs.

    Numeric cells match when ``|a - b| <= atol + rtol * max(|a|, |b|)``; all
    other cells must be identical.  Header or row-count differences are
    reported as structural mismatches.
    """
    def read(p):
        with open(p, newline="") as fh:
            return list(csv.reader(fh))

    a, b = read(baseline), read(new)
    if not a or not b:
        return CompareResult(0, structural="empty file")
    if a[0] != b[0]:
        return CompareResult(0, structural=f"headers differ: {a[0]} vs {b[0]}")
    if len(a) != len(b):
        return CompareResult(len(a) - 1, structural=f"row counts differ: {len(a) - 1} vs {len(b) - 1}")
    res = CompareResult(len(a) - 1)
    header = a[0]
    for i, (ra, rb) in enumerate(zip(a[1:], b[1:]), start=1):
        if len(ra) != len(rb):
            res.mismatches.append((i, "<row>", len(ra), len(rb)))
            continue
        for name, x, y in zip(header, ra, rb):
            if x == y:
                continue
            try:
                fx, fy = float(x), float(y)
            except ValueError:
                res.mismatches.append((i, name, x, y))
                continue
            if math.isnan(fx) and math.isnan(fy):
                continue
            if not abs(fx - fy) <= atol + rtol * max(abs(fx), abs(fy)):
                res.mismatches.append((i, name, x, y))
    return res
