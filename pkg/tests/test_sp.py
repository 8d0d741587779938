import numpy as np
import pytest

from nrlimit.kgm import BlowupError
from nrlimit.sp import SpState, free_schrodinger_gaussian, initial_sp_state, run_sp, solve_u, step_sp
from nrlimit.spectral import Grid, SpectralField, band_limit, convolve_direct, to_spectral

from conftest import random_field


@pytest.fixture(scope="module")
def grid():
    return Grid(32, 16.0)


def _gaussian_pair(g, w_plus=1.2, w_minus=1.1, shift=0.5):
    # narrow enough that the bumps are periodic to ~1e-12 at the box faces
    x, y, z = g.mesh()
    c = 0.5 * g.L
    vp = np.exp(-((x - c - shift) ** 2 + (y - c) ** 2 + (z - c) ** 2) / (2 * w_plus**2)) * np.exp(2j * np.pi * x / g.L)  # lattice wavevector keeps it periodic
    vm = 0.7 * np.exp(-((x - c + shift) ** 2 + (y - c) ** 2 + (z - c) ** 2) / (2 * w_minus**2))
    return SpState(to_spectral(vp, g), to_spectral(vm, g), 0.0)


class TestPotential:
    def test_equal_densities_cancel(self, grid16, rng):
        v = random_field(grid16, rng, real=False)
        u, defect = solve_u(v, v)
        assert np.max(np.abs(u.coeffs)) == 0.0
        assert defect == 0.0

    def test_matches_direct_convolution(self, grid8, rng):
        v = band_limit(random_field(grid8, rng, real=False))
        zero = SpectralField(grid8, np.zeros(grid8.shape, dtype=complex))
        u, defect = solve_u(v, zero)
        src = convolve_direct(v.coeffs, v.conj().coeffs, grid=grid8)
        mean = src[0, 0, 0]
        src[0, 0, 0] = 0.0
        expect = np.zeros_like(src)
        nz = grid8.xi2 > 0
        expect[nz] = src[nz] / grid8.xi2[nz]
        assert np.max(np.abs(u.coeffs - expect)) <= 1e-12 * np.max(np.abs(expect))
        assert defect == pytest.approx(mean.real / np.sqrt(8**3), rel=1e-12)
        assert u.real

    def test_poisson_residual(self, grid16, rng):
        vp = random_field(grid16, rng, real=False)
        vm = random_field(grid16, rng, real=False)
        u, _ = solve_u(vp, vm)
        # the residual Δu + (ρ - ρ̄) is checked against the dealiased density
        from nrlimit.spectral import dealiased_product

        rho = dealiased_product(vp, vp.conj()).coeffs - dealiased_product(vm, vm.conj()).coeffs
        rho[0, 0, 0] = 0.0
        resid = -grid16.xi2 * u.coeffs + rho
        assert np.max(np.abs(resid)) <= 1e-12 * np.max(np.abs(rho))

    def test_grid_mismatch(self, grid8, grid16, rng):
        with pytest.raises(ValueError):
            solve_u(random_field(grid8, rng), random_field(grid16, rng))


class TestStepper:
    def test_componentwise_l2_is_conserved(self, grid):
        s = _gaussian_pair(grid)
        n0 = np.array(s.l2())
        one = np.array(step_sp(s, 0.05).l2())
        assert np.all(np.abs(one - n0) <= 1e-12 * n0)
        traj = run_sp(s, 1.0, 0.05, cadence=10)
        drift = np.max(np.abs(np.asarray(traj.l2) - n0) / n0)
        assert drift <= 1e-10

    def test_conjugate_pair_is_free_flight(self, grid):
        """v⁻ = conj(v⁺) keeps |v⁺| = |v⁻|, so u ≡ 0 and both evolve freely."""
        w = 1.5
        v0 = to_spectral(free_schrodinger_gaussian(grid, 0.0, width=w), grid)
        s = SpState(v0, v0.conj(), 0.0)
        u, _ = solve_u(s.v_plus, s.v_minus)
        assert np.max(np.abs(u.coeffs)) < 1e-14
        out = run_sp(s, 0.5, 0.05, cadence=1).final
        for v, sign in ((out.v_plus, +1), (out.v_minus, -1)):
            exact = free_schrodinger_gaussian(grid, 0.5, width=w, sign=sign)
            assert np.max(np.abs(v.physical() - exact)) < 1e-10

    def test_zero_data_stays_zero(self, grid8):
        z = SpectralField(grid8, np.zeros(grid8.shape, dtype=complex))
        traj = run_sp(SpState(z, z, 0.0), 0.2, 0.05, cadence=2)
        assert np.all(traj.final.v_plus.coeffs == 0) and np.all(traj.final.v_minus.coeffs == 0)

    def test_second_order_self_convergence(self, grid):
        s = _gaussian_pair(grid)
        finals = [run_sp(s, 0.4, 0.1 / k, cadence=1).final for k in (1, 2, 4, 8)]
        d = [np.linalg.norm(a.v_plus.coeffs - b.v_plus.coeffs) for a, b in zip(finals, finals[1:])]
        assert d[1] / d[2] == pytest.approx(4.0, rel=0.25)
        assert d[0] / d[1] == pytest.approx(4.0, rel=0.25)

    def test_time_reversal(self, grid):
        s = _gaussian_pair(grid)
        fwd = run_sp(s, 0.5, 0.01, cadence=5).final
        back = run_sp(fwd, -0.5, 0.01, cadence=5).final
        err = max(np.linalg.norm(back.v_plus.coeffs - s.v_plus.coeffs) / np.linalg.norm(s.v_plus.coeffs),
                  np.linalg.norm(back.v_minus.coeffs - s.v_minus.coeffs) / np.linalg.norm(s.v_minus.coeffs))
        assert err <= 1e-8
        assert back.t == pytest.approx(0.0, abs=1e-15)

    def test_blowup_detector(self, grid8, rng):
        v = random_field(grid8, rng, real=False)
        bad = SpectralField(grid8, np.full(grid8.shape, np.nan + 0j))
        with pytest.raises(BlowupError):
            step_sp(SpState(bad, v, 0.0), 0.1)

    def test_rejects_bad_arguments(self, grid8, rng):
        v = random_field(grid8, rng, real=False)
        s = SpState(v, v, 0.0)
        with pytest.raises(ValueError):
            step_sp(s, 0.0)
        with pytest.raises(ValueError):
            run_sp(s, 1.0, -0.1)


class TestTrajectory:
    def test_gronwall_envelope_holds(self, grid):
        s = _gaussian_pair(grid)
        traj = run_sp(s, 1.0, 0.02, cadence=25)
        grad = np.asarray(traj.grad_l2)
        env = traj.gronwall_envelope()
        assert np.all(grad <= env * (1 + 1e-12))

    def test_sample_times(self, grid8, rng):
        v = random_field(grid8, rng, real=False)
        traj = run_sp(SpState(v, v, 0.0), 0.3, 0.04, cadence=3)
        assert traj.times == pytest.approx([0.0, 0.1, 0.2, 0.3])
        assert traj.steps == 9  # 0.1 / 0.04 → 3 substeps of 1/30

    def test_initial_state_from_limits(self, grid8, rng):
        a = random_field(grid8, rng, real=False)
        b = random_field(grid8, rng, real=False)
        s = initial_sp_state(a, b)
        assert np.allclose(s.v_plus.coeffs + s.v_minus.coeffs, a.coeffs)
        assert np.allclose(s.v_plus.coeffs - s.v_minus.coeffs, 1j * b.coeffs)
