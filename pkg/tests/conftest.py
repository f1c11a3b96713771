import numpy as np
import pytest

from spinbec.guesses import make_spinor_guess
from spinbec.physics import PhysicsParams
from spinbec.spectral import SpinorField, make_grid


def random_field(grid, seed=0, decay=None):
    """Random complex spinor; with ``decay`` it is damped by a Gaussian envelope."""
    rng = np.random.default_rng(seed)
    shape = (3,) + grid.shape
    data = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if decay is not None:
        r2 = sum(c * c for c in grid.coords())
        data = data * np.exp(-r2 / (2 * decay**2))
    return SpinorField(grid, data)


def smooth_random_field(grid, seed=0, modes=4):
    """Sum of a few Gaussian-damped Hermite-like terms with random coefficients."""
    rng = np.random.default_rng(seed)
    x, y = grid.coords()[:2]
    r2 = sum(c * c for c in grid.coords())
    env = np.exp(-r2 / 2)
    comps = []
    for _ in range(3):
        f = np.zeros(grid.shape, dtype=complex)
        for i in range(modes):
            for j in range(modes - i):
                c = rng.standard_normal() + 1j * rng.standard_normal()
                f = f + c * x**i * y**j * env
        comps.append(f)
    return SpinorField(grid, np.stack(comps))


@pytest.fixture
def grid64():
    return make_grid(2, 8, 64)


@pytest.fixture
def linear_params():
    return PhysicsParams(0.0, 0.0)


@pytest.fixture
def case2_params():
    return PhysicsParams(100.0, 1.0, 0.3, 0.3)


@pytest.fixture
def gaussian_spinor(grid64, linear_params):
    return make_spinor_guess(("a", "a", "a"), grid64, linear_params)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is not None and mod.REPORT:
        terminalreporter.section("acceptance criteria")
        for line in mod.REPORT:
            terminalreporter.write_line(line)
