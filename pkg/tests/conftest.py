import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def ulps(x, n):
    """n units in the last place at magnitude |x|."""
    return n * np.spacing(np.maximum(np.abs(x), np.finfo(float).tiny))


def shell_points(rng, n, r_low, r_high):
    """Random points of R^4 with norm uniform in [r_low, r_high]."""
    from transtab import quaternion as qt

    return qt.random_unit(rng, n) * rng.uniform(r_low, r_high, n)[:, None]


def sublevel_points(rng, n, epsilon=0.5):
    """Points with V(x) = (|x|^2 - 1)^2 <= epsilon."""
    root = np.sqrt(epsilon)
    return shell_points(rng, n, np.sqrt(1 - root), np.sqrt(1 + root))


def tube_points(rng, n, epsilon=0.5, delta=0.059):
    root = np.sqrt(epsilon)
    return shell_points(rng, n, np.sqrt(1 - root) - delta, np.sqrt(1 + root) + delta)


def random_omegas(rng, n, low=0.0, high=0.5):
    om = np.zeros((n, 4))
    om[:, 1:] = rng.uniform(low, high, (n, 3))
    return om


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
