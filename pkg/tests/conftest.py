import numpy as np
import pytest

from nrlimit.spectral import Grid, SpectralField, VectorField, band_limit, leray_project, to_spectral


@pytest.fixture
def grid8():
    return Grid(8, 2 * np.pi)


@pytest.fixture
def grid16():
    return Grid(16, 8.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_field(grid, rng, real=True, decay=1.0):
    """Smooth random band-limited field with Gaussian spectral envelope."""
    shape = grid.shape
    vals = rng.standard_normal(shape) + (0 if real else 1j * rng.standard_normal(shape))
    f = to_spectral(vals, grid, real=real)
    env = np.exp(-0.5 * decay * grid.xi2 * (grid.L / (2 * np.pi)) ** 2 / (grid.n / 4) ** 2)
    return band_limit(SpectralField(grid, f.coeffs * env, real))


def random_divfree(grid, rng, decay=1.0):
    comps = [random_field(grid, rng, True, decay) for _ in range(3)]
    u = leray_project(VectorField.from_components(comps))
    c = u.coeffs.copy()
    c[:, 0, 0, 0] = 0.0
    return band_limit(VectorField(grid, c))


# one verdict line per acceptance criterion, printed after the test report
ACCEPTANCE: dict = {}


def record_criterion(number: int, title: str, checks: dict) -> list:
    """Store the verdict of a criterion; returns the names of the failed checks."""
    failed = [name for name, (ok, _) in checks.items() if not ok]
    detail = "; ".join(f"{name}={info}" for name, (_, info) in checks.items())
    ACCEPTANCE[number] = (title, not failed, detail)
    return failed


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number} [{'PASS' if ok else 'FAIL'}] {title} :: {detail}")
