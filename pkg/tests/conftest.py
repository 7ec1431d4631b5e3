import numpy as np
import pytest

from safesdre.barriers import SafetySpec, augment, circle_obstacle, get_barrier
from safesdre.systems import CostSpec, linear_2d_benchmark, planar_quadrotor_benchmark


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def linear2d():
    return linear_2d_benchmark()


@pytest.fixture
def quadrotor():
    return planar_quadrotor_benchmark()


@pytest.fixture
def disk22():
    """The keep-out disk used by the 2-state benchmark: center (2,2), r=0.5."""
    return circle_obstacle([2.0, 2.0], 0.5)


@pytest.fixture
def safety2d(disk22):
    return SafetySpec([disk22])


@pytest.fixture
def aug2d(linear2d, safety2d):
    return augment(linear2d, safety2d, get_barrier("inverse"), gamma=1.0)


@pytest.fixture
def cost2d(aug2d):
    return CostSpec.constant(np.eye(aug2d.n_bar), np.eye(aug2d.m))


def random_stabilizable_instance(rng, n_max=8, strong_control=True):
    """Random (A, G, Q) with (A, G) stabilizable and Q positive definite.

    Dense Gaussian (A, B) pairs are controllable almost surely and an SPD Q
    makes (A, Q^1/2) observable, so the stabilizing solution exists. With
    ``strong_control`` a definite floor is added to G, which keeps the
    solution magnitude moderate; without it, rank-deficient G can produce
    nearly uncontrollable unstable modes whose solutions are huge (a stress
    regime where only backward-error accuracy is meaningful).
    """
    n = int(rng.integers(2, n_max + 1))
    m = int(rng.integers(1, 4))
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    G = B @ B.T
    if strong_control:
        G = G + 0.05 * np.eye(n)
    M = rng.normal(size=(n, n))
    Q = M @ M.T + 0.1 * np.eye(n)
    return A, G, Q


def random_hurwitz(rng, n_max=8):
    """Random Hurwitz matrix via shifted spectrum."""
    n = int(rng.integers(2, n_max + 1))
    A = rng.normal(size=(n, n))
    shift = float(np.max(np.linalg.eigvals(A).real))
    return A - (shift + 0.5 + rng.uniform(0.0, 1.0)) * np.eye(n)
