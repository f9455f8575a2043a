"""
Seeded random instances: posets, probability measures, monotone kernels
"""

import logging
from typing import List, Optional, Tuple, Union

import numpy as np
from numpy.random import Generator, SeedSequence, default_rng

from markov_kernel import MarkovKernel
from measure import Measure
from poset import ANTICHAIN, CHAIN, Poset, new_poset

logger = logging.getLogger(__name__)

SeedLike = Union[int, SeedSequence, Generator, None]


def make_rng(seed: SeedLike) -> Generator:
    """PCG64 generator; an existing Generator is passed through"""
    if isinstance(seed, Generator):
        return seed
    return default_rng(seed)


def spawn_rngs(seed: Union[int, SeedSequence], count: int) -> List[Generator]:
    """Independent child streams, one per block of work"""
    sequence = seed if isinstance(seed, SeedSequence) else SeedSequence(seed)
    return [default_rng(child) for child in sequence.spawn(count)]


def random_poset(rng: Generator, n: int, density: float = 0.3) -> Poset:
    """Transitive closure of a random DAG whose arcs point forward in index order"""
    if n < 1:
        raise ValueError(f"Poset needs at least one element, got {n}")
    arcs = rng.random((n, n)) < density
    covers = [(int(i), int(j)) for i, j in zip(*np.nonzero(np.triu(arcs, k=1)))]
    return new_poset(list(range(n)), covers)


def random_probability(rng: Generator, poset: Poset, zero_prob: float = 0.2) -> Measure:
    """Dirichlet weights with some entries zeroed; at least one entry survives"""
    weights = rng.dirichlet(np.ones(poset.n))
    dropped = rng.random(poset.n) < zero_prob
    if dropped.all():
        dropped[int(rng.integers(poset.n))] = False
    weights[dropped] = 0.0
    return Measure(poset, weights / weights.sum())


def random_monotone_map(rng: Generator, poset: Poset, attempts: int = 20) -> np.ndarray:
    """
    Order-preserving map f, listed as f[x] for every element x

    Elements are assigned along a linear extension; each one picks an image
    above the images of everything below it. When those images have no common
    upper bound the draw restarts, and after ``attempts`` failures a constant
    map is returned.
    """
    n = poset.n
    if poset.kind == ANTICHAIN:
        return rng.integers(0, n, size=n)
    if poset.kind == CHAIN:
        return np.sort(rng.integers(0, n, size=n))

    leq = poset.leq
    order = poset.linear_extension()
    for _ in range(attempts):
        image = np.full(n, -1, dtype=int)
        for x in order:
            candidates = np.ones(n, dtype=bool)
            below = np.flatnonzero(leq[:, x])
            for z in below:
                if z != x:
                    candidates &= leq[image[z]]
            choices = np.flatnonzero(candidates)
            if choices.size == 0:
                break
            image[x] = int(rng.choice(choices))
        else:
            return image
    logger.debug(f"Falling back to a constant map after {attempts} attempts")
    return np.full(n, int(rng.integers(n)), dtype=int)


def random_monotone_kernel(rng: Generator, poset: Poset, n_maps: int = 4) -> MarkovKernel:
    """Convex mixture of monotone maps plus one constant map"""
    maps = [random_monotone_map(rng, poset) for _ in range(n_maps)]
    maps.append(np.full(poset.n, int(rng.integers(poset.n)), dtype=int))
    weights = rng.dirichlet(np.ones(len(maps)))
    return MarkovKernel.from_maps(poset, maps, weights)


def random_stochastic_matrix(rng: Generator, n: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n), size=n)


def doeblin_kernel(rng: Generator, n: int, eps: float,
                   psi: Optional[np.ndarray] = None) -> MarkovKernel:
    """P = (1 - eps) Q + eps psi on the identity order, so every row dominates eps psi"""
    if not 0.0 < eps <= 1.0:
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    poset = Poset.antichain(n)
    if psi is None:
        psi = rng.dirichlet(np.ones(n))
    rows = (1.0 - eps) * random_stochastic_matrix(rng, n) + eps * np.asarray(psi)[np.newaxis, :]
    return MarkovKernel(poset, rows)


def random_dominated_pair(rng: Generator, poset: Poset) -> Tuple[Measure, Measure]:
    """
    (lower, upper) with lower stochastically dominated by upper

    Each element's mass in ``lower`` is split at random over its up-set.
    """
    lower = random_probability(rng, poset)
    upper = np.zeros(poset.n)
    for x in np.flatnonzero(lower.weights > 0):
        above = np.flatnonzero(poset.leq[x])
        upper[above] += lower.weights[x] * rng.dirichlet(np.ones(above.size))
    return lower, Measure(poset, upper / upper.sum())
