import numpy as np
import pytest
from hypothesis import strategies as st

from markov_kernel import MarkovKernel
from measure import Measure
from poset import Poset, new_poset
from random_instances import make_rng, random_monotone_kernel, random_poset, random_probability

SEEDS = st.integers(min_value=0, max_value=2 ** 32 - 1)


def stationary_oracle(rows: np.ndarray) -> np.ndarray:
    """pi with pi P = pi and sum 1, by least squares on the stacked system"""
    n = rows.shape[0]
    system = np.vstack([rows.T - np.eye(n), np.ones((1, n))])
    target = np.zeros(n + 1)
    target[-1] = 1.0
    pi, *_ = np.linalg.lstsq(system, target, rcond=None)
    return pi


def random_setup(seed: int, low: int = 1, high: int = 7):
    """A random poset with two random probabilities on it"""
    rng = make_rng(seed)
    poset = random_poset(rng, int(rng.integers(low, high + 1)), density=float(rng.uniform(0.1, 0.6)))
    return rng, poset, random_probability(rng, poset), random_probability(rng, poset)


@pytest.fixture
def chain3():
    return new_poset([0, 1, 2], [(0, 1), (1, 2)])


@pytest.fixture
def chain_pair(chain3):
    """mu = (delta_1 + delta_2) / 2 and nu = (delta_0 + delta_1) / 2"""
    return Measure(chain3, [0.0, 0.5, 0.5]), Measure(chain3, [0.5, 0.5, 0.0])


@pytest.fixture
def two_point_pair():
    antichain = Poset.antichain(2)
    return Measure(antichain, [0.5, 0.5]), Measure(antichain, [0.3, 0.7])


@pytest.fixture
def diamond():
    return new_poset(["bottom", "left", "right", "top"],
                     [("bottom", "left"), ("bottom", "right"), ("left", "top"), ("right", "top")])


@pytest.fixture
def two_state_kernel():
    return MarkovKernel(Poset.chain(2), [[0.7, 0.3], [0.2, 0.8]])


@pytest.fixture
def diamond_kernel(diamond):
    rows = [[0.4, 0.3, 0.2, 0.1],
            [0.3, 0.3, 0.1, 0.3],
            [0.2, 0.1, 0.4, 0.3],
            [0.1, 0.2, 0.2, 0.5]]
    return MarkovKernel(diamond, rows)


@pytest.fixture
def rng():
    return make_rng(20240101)


@pytest.fixture
def monotone_kernel(rng):
    return random_monotone_kernel(rng, random_poset(rng, 6, 0.4))
