import numpy as np
import pytest

from ppgd.ch import SolverConfig, build_problem
from ppgd.spectral import Grid, MobilityField, Transform, mean_zero_project


def random_mean_zero(grid, seed, scale=1.0):
    rng = np.random.default_rng(seed)
    return scale * mean_zero_project(rng.standard_normal(grid.shape))


def smooth_mean_zero(grid, seed, modes=3, scale=1.0):
    """Random trigonometric polynomial with a few low modes."""
    rng = np.random.default_rng(seed)
    x, y = grid.coordinates()
    w = 2 * np.pi / grid.length
    out = np.zeros(grid.shape)
    for p in range(modes + 1):
        for q in range(-modes, modes + 1):
            if p == 0 and q <= 0:
                continue
            a, b = rng.standard_normal(2)
            out += a * np.cos(w * (p * x + q * y)) + b * np.sin(w * (p * x + q * y))
    return scale * out / np.max(np.abs(out))


def spd_quadratic(seed=0, n=8):
    """Seeded SPD matrix, right-hand side and start for dense quadratic tests."""
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = (q * rng.uniform(1.0, 10.0, n)) @ q.T
    return a, rng.standard_normal(n), rng.standard_normal(n)


@pytest.fixture
def grid16():
    return Grid(16)


@pytest.fixture
def transform16(grid16):
    return Transform(grid16)


@pytest.fixture
def cosine_mobility16(grid16):
    x, _ = grid16.coordinates()
    return MobilityField(2.0 + np.cos(2 * np.pi * x))


@pytest.fixture
def coarse_problem():
    config = SolverConfig(n=16, delta0=0.1)
    return config, build_problem(config)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
