import numpy as np
import pytest

from nrlimit.diagnostics import (
    CSV_COLUMNS,
    DiagnosticsRecord,
    comparison_errors,
    fit_slope,
    free_energy,
    kgm_energy,
    lp_norm,
    null_form_Q,
    null_identity_check,
    q_symbol,
    sobolev_norm,
    strichartz_trackers,
)
from nrlimit.kgm import DataSpec, GaussianBump, KgmOptions, KgmState, build_initial_data, free_kg_exact, run_kgm
from nrlimit.diagnostics import KgmRecorder
from nrlimit.propagators import propagate_V
from nrlimit.sp import SpState
from nrlimit.spectral import Grid, SpectralField, VectorField, gradient, hc_from_xi2, to_physical, to_spectral

from conftest import random_divfree, random_field


def _plane_wave(g, m):
    x = g.mesh()
    k = [2 * np.pi * mi / g.L for mi in m]
    return to_spectral(np.exp(1j * sum(k[i] * x[i] for i in range(3))), g, real=False), np.array(k)


class TestNorms:
    def test_l2_and_h1_identities(self, grid16, rng):
        f = random_field(grid16, rng, real=False)
        assert sobolev_norm(f, 0.0) == pytest.approx(lp_norm(f, 2), rel=1e-12)
        grad = sobolev_norm(f, 1.0, homogeneous=True)
        assert sobolev_norm(f, 1.0) ** 2 == pytest.approx(sobolev_norm(f, 0.0) ** 2 + grad**2, rel=1e-12)

    def test_single_mode(self):
        g = Grid(8, 4.0)
        f, k = _plane_wave(g, (1, 2, 0))
        expect = np.sqrt(1 + k @ k) * np.sqrt(g.volume)
        assert sobolev_norm(f, 1.0) == pytest.approx(expect, rel=1e-12)

    @pytest.mark.parametrize("p", [1.0, 1.5, 2.0, 3.0, 6.0])
    def test_lp_matches_physical_sum(self, grid16, rng, p):
        f = random_field(grid16, rng, real=False)
        vals = to_physical(f)
        brute = (np.sum(np.abs(vals) ** p) * grid16.cell_volume) ** (1 / p)
        assert lp_norm(f, p) == pytest.approx(brute, rel=1e-12)

    def test_negative_homogeneous_needs_zero_mean(self, grid8):
        f = to_spectral(np.ones(grid8.shape), grid8)
        with pytest.raises(ValueError):
            sobolev_norm(f, -1.0, homogeneous=True)

    def test_trilinear_bound_constant(self, grid16, rng):
        """‖fgh‖₂ ≤ K ‖f‖_{Ḣ¹}‖g‖_{Ḣ¹}‖h‖_{Ḣ¹} on zero-mean trios; K is measured, not known."""
        ratios = []
        for _ in range(10):
            fs = []
            for _ in range(3):
                f = random_field(grid16, rng)
                c = f.coeffs.copy()
                c[0, 0, 0] = 0.0
                fs.append(SpectralField(grid16, c, True))
            prod = np.prod([to_physical(f) for f in fs], axis=0)
            lhs = np.sqrt(np.sum(prod**2) * grid16.cell_volume)
            rhs = np.prod([sobolev_norm(f, 1.0, homogeneous=True) for f in fs])
            ratios.append(lhs / rhs)
        assert np.all(np.isfinite(ratios)) and max(ratios) < 1.0


class TestEnergy:
    def test_vacuum(self, grid8):
        z = SpectralField(grid8, np.zeros(grid8.shape, dtype=complex))
        s = KgmState(z, z, VectorField.zeros(grid8), VectorField.zeros(grid8), 0.0, 2.0)
        assert kgm_energy(s).total == 0.0

    def test_free_energy_closed_form(self, grid16, rng):
        g = grid16
        a, b = random_field(g, rng, real=False), random_field(g, rng, real=False)
        for t in (0.0, 0.3):
            s = KgmState(a, b, VectorField.zeros(g), VectorField.zeros(g), t, 3.0)
            e = kgm_energy(s, coupled=False)
            assert e.total == pytest.approx(free_energy(s), rel=1e-10)
            assert e.electric == e.magnetic == 0.0

    def test_free_energy_is_conserved(self):
        g = Grid(16, 16.0)
        spec = DataSpec.electron_positron(GaussianBump(1.0, 1.0), GaussianBump(0.5, 1.0))
        s = build_initial_data(spec, 2.0, g, coupled=False)
        traj = run_kgm(s, 0.2, cadence=1, options=KgmOptions(coupled=False))
        e0 = kgm_energy(s, coupled=False).total
        assert kgm_energy(traj.final, coupled=False).total == pytest.approx(e0, rel=1e-12)


class TestNullForms:
    def test_antisymmetry(self, grid16, rng):
        u, v = random_field(grid16, rng), random_field(grid16, rng)
        assert np.allclose(null_form_Q(u, v, 0, 2).coeffs, -null_form_Q(u, v, 2, 0).coeffs, atol=1e-14)
        assert np.max(np.abs(null_form_Q(u, u, 0, 1).coeffs)) < 1e-13

    def test_single_modes(self):
        g = Grid(16, 2 * np.pi)
        u, eta = _plane_wave(g, (1, 2, 0))
        v, zeta = _plane_wave(g, (0, -1, 3))
        Q = null_form_Q(u, v, 0, 1)
        w, _ = _plane_wave(g, (1, 1, 3))
        # (iη_i)(iζ_j) - (iη_j)(iζ_i) = -q_ij(η, ζ), and e^{iη·x}e^{iζ·x} = e^{i(η+ζ)·x}
        assert np.allclose(to_physical(Q), -q_symbol(eta, zeta, 0, 1) * to_physical(w), atol=1e-12)

    def test_symbol_bound(self):
        r = np.random.default_rng(99)
        eta = r.standard_normal((100_000, 3)) * np.exp(r.uniform(-3, 3, (100_000, 1)))
        zeta = r.standard_normal((100_000, 3)) * np.exp(r.uniform(-3, 3, (100_000, 1)))
        cross = np.linalg.norm(np.cross(eta, zeta), axis=1)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            assert np.all(np.abs(q_symbol(eta, zeta, i, j)) <= cross * (1 + 1e-12))
        bound = np.linalg.norm(eta + zeta, axis=1) * np.sqrt(np.linalg.norm(eta, axis=1) * np.linalg.norm(zeta, axis=1))
        assert np.all(cross <= bound * (1 + 1e-12))

    def test_identity_on_random_divfree_inputs(self, grid16):
        r = np.random.default_rng(2024)
        gaps = [null_identity_check(random_divfree(grid16, r), random_field(grid16, r)) for _ in range(20)]
        assert max(gaps) <= 1e-10

    def test_identity_with_zero_field(self, grid8, rng):
        assert null_identity_check(VectorField.zeros(grid8), random_field(grid8, rng)) == 0.0

    def test_identity_fails_for_gradients(self, grid16, rng):
        u = gradient(random_field(grid16, rng))
        assert null_identity_check(u, random_field(grid16, rng)) > 0.1


class TestRecord:
    def test_times_must_increase(self):
        rec = DiagnosticsRecord()
        rec.append(0.0, {"a": 1.0})
        with pytest.raises(ValueError):
            rec.append(0.0, {"a": 2.0})

    def test_values_must_be_finite(self):
        rec = DiagnosticsRecord()
        with pytest.raises(FloatingPointError):
            rec.append(0.0, {"a": float("nan")})

    def test_trapezoid_self_convergence(self):
        errs = []
        for n in (10, 20, 40):
            rec = DiagnosticsRecord()
            for t in np.linspace(0, 1, n + 1):
                rec.append(t, {"f": np.exp(t)})
            errs.append(abs(rec.running_integral("f")[-1] - (np.e - 1)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.05)
        assert errs[1] / errs[2] == pytest.approx(4.0, rel=0.05)

    def test_csv_columns(self):
        assert CSV_COLUMNS[:3] == ("run_id", "c", "t")
        assert CSV_COLUMNS[-1] == "charge_defect" and len(CSV_COLUMNS) == 18


class TestTrackers:
    def _free_record(self, c=2.0):
        g = Grid(16, 16.0)
        spec = DataSpec.electron_positron(GaussianBump(1.0, 1.0), GaussianBump(0.5, 1.0))
        s = build_initial_data(spec, c, g, coupled=False)
        opts = KgmOptions(coupled=False)
        rec = KgmRecorder(options=opts)
        run_kgm(s, 0.2, cadence=4, options=opts, observer=rec)
        rec.record.metadata["c"] = c
        return s, rec.record

    def test_free_field_Y_is_initial_h1(self):
        s, rec = self._free_record()
        Y = strichartz_trackers(rec).Y
        h1 = sum(sobolev_norm(p, 1.0) for p in (s.psi_plus, s.psi_minus))
        assert np.allclose(Y, h1, rtol=1e-12)

    def test_zero_trajectory(self, grid8):
        rec = DiagnosticsRecord(metadata={"c": 1.0})
        keys = ["A_h1dot", "At_l2_over_c", "box_A_l2", "h1_psi_p", "h1_psi_m", "F_h1_p", "F_h1_m",
                "low_l2_p", "low_l2_m", "low_l6_p", "low_l6_m"]
        for t in (0.0, 0.1, 0.2):
            rec.append(t, dict.fromkeys(keys, 0.0))
        X, Y, Z = strichartz_trackers(rec)
        assert not (X.any() or Y.any() or Z.any())

    def test_requires_light_speed(self):
        with pytest.raises(ValueError):
            strichartz_trackers(DiagnosticsRecord())


class TestComparison:
    def test_identical_fields(self, grid16, rng):
        a, b = random_field(grid16, rng, real=False), random_field(grid16, rng, real=False)
        s = KgmState(a, b, VectorField.zeros(grid16), VectorField.zeros(grid16), 0.0, 4.0)
        err = comparison_errors(s, SpState(a, b, 0.0))
        assert err["h1_err_p"] == 0.0 and err["h1_err_m"] == 0.0

    def test_free_error_matches_per_mode_bound(self):
        """|e^{-ith_c} - e^{-it|ξ|²/2}| ≈ t|h_c - |ξ|²/2| while the phase gap is small."""
        g = Grid(16, 16.0)
        spec = DataSpec.electron_positron(GaussianBump(1.0, 1.0), GaussianBump(0.5, 1.0))
        from nrlimit.kgm import limit_data

        alpha, beta = limit_data(spec, g)
        c, t = 8.0, 0.5
        _, p0, _ = free_kg_exact(alpha, beta, 0.0, c)
        _, pt, _ = free_kg_exact(alpha, beta, t, c)
        err = sobolev_norm(SpectralField(g, pt.coeffs - propagate_V(p0, t, +1).coeffs), 1.0)
        gap = np.abs(hc_from_xi2(g.xi2, c) - 0.5 * g.xi2)
        bound = sobolev_norm(SpectralField(g, t * gap * p0.coeffs), 1.0)
        assert 0.5 * bound <= err <= bound

    def test_grid_mismatch(self, grid8, grid16, rng):
        a = random_field(grid8, rng, real=False)
        s = KgmState(a, a, VectorField.zeros(grid8), VectorField.zeros(grid8), 0.0, 4.0)
        b = random_field(grid16, rng, real=False)
        with pytest.raises(ValueError):
            comparison_errors(s, SpState(b, b, 0.0))


class TestSlopes:
    def test_exact_power_law(self):
        c = np.array([2.0, 4.0, 8.0, 16.0])
        slope, resid = fit_slope(c, 3.0 * c**-2)
        assert slope == pytest.approx(-2.0, abs=1e-12) and resid < 1e-12

    def test_nonfinite_values(self):
        s, r = fit_slope([1, 2], [1.0, 0.0])
        assert np.isnan(s) and np.isnan(r)
