import numpy as np
import pytest

from nrlimit.diagnostics import kgm_energy
from nrlimit.kgm import (
    BlowupError,
    DataSpec,
    GaussianBump,
    KgmOptions,
    KgmState,
    TorusFitError,
    VortexBump,
    build_initial_data,
    charge,
    compute_remainder,
    derived_fields,
    free_kg_exact,
    kgm_rhs,
    limit_data,
    run_kgm,
    solve_A0,
    step_kgm,
    torus_fit,
)
from nrlimit.spectral import Grid, SpectralField, divergence_residual


@pytest.fixture(scope="module")
def small_grid():
    return Grid(16, 16.0)


# on the coarse test grid the farthest face sample sits 7 units from the centre
SMALL_PAIR = dict(electron=GaussianBump(1.0, 1.0), positron=GaussianBump(0.5, 1.0))


@pytest.fixture(scope="module")
def fine_grid():
    return Grid(32, 16.0)


@pytest.fixture(scope="module")
def spec():
    return DataSpec.electron_positron(**SMALL_PAIR, a0=VortexBump(0.3, 1.0))


def _h1(a, g):
    return float(np.sqrt(np.sum((1 + g.xi2) * np.abs(a) ** 2) * g.cell_volume))


class TestInitialData:
    def test_torus_fit_guard(self, small_grid):
        wide = DataSpec.electron_positron(GaussianBump(1.0, 3.0), None)
        with pytest.raises(TorusFitError):
            build_initial_data(wide, 2.0, small_grid)

    def test_torus_fit_metric(self, small_grid):
        vals = GaussianBump(1.0, 1.0).sample(small_grid)
        assert torus_fit(vals) < 1e-10
        assert torus_fit(np.ones(small_grid.shape)) == 1.0

    def test_potential_is_self_consistent(self, small_grid, spec):
        """The CG solution at t = 0 agrees with the explicit formula on the split fields."""
        s = build_initial_data(spec, 2.0, small_grid)
        A0, _ = solve_A0(s.psi_plus, s.psi_minus, 2.0, 0.0)
        d = derived_fields(s)
        assert np.allclose(d.A0.coeffs, A0.coeffs, atol=1e-12)
        # φ(0) = α and ∂ₜφ(0) = Mβ reproduce the prescribed data
        alpha, beta = limit_data(spec, small_grid)
        M = 2.0 * np.sqrt(4.0 + small_grid.xi2)
        assert np.allclose(d.phi.coeffs, alpha.coeffs, atol=1e-12)
        assert np.max(np.abs(d.phi_t.coeffs - M * beta.coeffs)) < 1e-9 * np.max(np.abs(M * beta.coeffs))

    def test_split_approaches_bumps(self, small_grid):
        spec = DataSpec.electron_positron(**SMALL_PAIR)
        g = small_grid
        alpha, beta = limit_data(spec, g)
        v_minus = 0.5 * (alpha.coeffs - 1j * beta.coeffs)
        errs = [_h1(build_initial_data(spec, c, g).psi_minus.coeffs - v_minus, g) for c in (2.0, 4.0, 8.0)]
        assert errs[0] > errs[1] > errs[2]

    def test_vector_potential_is_solenoidal(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        assert divergence_residual(s.A) < 1e-14
        assert s.info["a0_h1dot"] > 0
        assert set(s.info["torus_fit"]) == {"alpha", "beta", "a0", "a1"}

    def test_random_spec_is_reproducible(self):
        a, b = DataSpec.random(7), DataSpec.random(7)
        assert a.fingerprint() == b.fingerprint()
        assert a.fingerprint() != DataSpec.random(8).fingerprint()


class TestRightHandSide:
    def test_remainder_matches_literal_commutator(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        s = KgmState(s.psi_plus, s.psi_minus, s.A, s.At, 0.137, s.c, s.info)
        fast = kgm_rhs(s).R.coeffs
        slow = compute_remainder(s).coeffs
        assert np.max(np.abs(fast - slow)) <= 1e-12 * np.max(np.abs(slow))

    def test_formulations_agree(self, small_grid, spec):
        s = build_initial_data(spec, 3.0, small_grid)
        s = KgmState(s.psi_plus, s.psi_minus, s.A, s.At, 0.05, s.c, s.info)
        a = kgm_rhs(s, KgmOptions(formulation="commutator"))
        b = kgm_rhs(s, KgmOptions(formulation="alternative"))
        for x, y in ((a.F_plus, b.F_plus), (a.F_minus, b.F_minus)):
            assert np.max(np.abs(x.coeffs - y.coeffs)) <= 1e-12 * np.max(np.abs(x.coeffs))

    def test_wave_source_is_solenoidal(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        assert divergence_residual(kgm_rhs(s).G) < 1e-14

    def test_unknown_formulation(self):
        with pytest.raises(ValueError):
            KgmOptions(formulation="other")


class TestStepper:
    def test_free_stepper_matches_exact_flow(self, small_grid):
        spec = DataSpec.electron_positron(**SMALL_PAIR)
        g = small_grid
        c = 3.0
        s = build_initial_data(spec, c, g, coupled=False)
        traj = run_kgm(s, 0.2, cadence=2, options=KgmOptions(coupled=False))
        alpha, beta = limit_data(spec, g)
        _, pp, pm = free_kg_exact(alpha, beta, 0.2, c)
        f = traj.final
        assert _h1(f.psi_plus.coeffs - pp.coeffs, g) <= 1e-10 * _h1(pp.coeffs, g)
        assert _h1(f.psi_minus.coeffs - pm.coeffs, g) <= 1e-10 * _h1(pm.coeffs, g)

    def test_charge_and_energy_are_conserved(self, fine_grid, spec):
        s = build_initial_data(spec, 2.0, fine_grid)
        q0, e0 = charge(s), kgm_energy(s).total
        traj = run_kgm(s, 0.1, cadence=1)
        assert abs(charge(traj.final) - q0) <= 1e-8 * abs(q0)
        assert abs(kgm_energy(traj.final).total - e0) <= 1e-5 * abs(e0)

    def test_second_order_self_convergence(self, fine_grid, spec):
        # needs a resolved grid: the per-step Nyquist projection inside the
        # potential phase costs O(dt) when the fields reach the cutoff
        s = build_initial_data(spec, 1.0, fine_grid)
        finals = [run_kgm(s, 0.1, dt=0.025 / k, cadence=1).final for k in (1, 2, 4)]
        for name in ("psi_plus", "psi_minus", "A", "At"):
            d = lambda a, b: _h1(getattr(a, name).coeffs - getattr(b, name).coeffs, fine_grid)
            ratio = d(finals[0], finals[1]) / d(finals[1], finals[2])
            assert ratio == pytest.approx(4.0, rel=0.25), name

    def test_sample_times_are_pinned(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        traj = run_kgm(s, 0.03, cadence=3)
        assert traj.times == pytest.approx([0.0, 0.01, 0.02, 0.03], abs=0)
        assert traj.steps == 3 * int(np.ceil(0.01 / 0.025 - 1e-12))

    def test_blowup_is_reported_with_last_good_state(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        bad = SpectralField(small_grid, s.psi_plus.coeffs * np.nan)
        broken = KgmState(bad, s.psi_minus, s.A, s.At, 0.0, 2.0)
        with pytest.raises(BlowupError) as info:
            step_kgm(broken, 1e-3)
        assert info.value.last_good is broken

    def test_rejects_nonpositive_step(self, small_grid, spec):
        s = build_initial_data(spec, 2.0, small_grid)
        with pytest.raises(ValueError):
            step_kgm(s, 0.0)
        with pytest.raises(ValueError):
            run_kgm(s, -1.0)
