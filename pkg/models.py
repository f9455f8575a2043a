"""
Example chains with known stability behaviour

- Bernoulli averaging X' = (X + W) / 2, solved exactly on dyadic grids
- Inventory X' = (X - W)_+ restocked to K at zero, with lognormal demand
- Splitting lattice walk on a chain, mixing two constant maps into a lazy walk
- Two-state monotone chain used throughout the examples
"""

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Dict, Optional, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from markov_kernel import MarkovKernel
from measure import Measure
from ordered_affinity import gamma
from poset import Poset
from stability_errors import BadParams, DepthExceeded

logger = logging.getLogger(__name__)

DEPTH_CAP = 20
DEFAULT_SHOCK_CELLS = 256

Dyadic = Union[int, float, str, Fraction]


@dataclass(frozen=True)
class DyadicDistribution:
    """
    Uniform law on the points offsets[k] / 2**depth

    ``depth`` counts the binary digits of the start point plus the steps.
    """

    depth: int
    offsets: np.ndarray
    weights: np.ndarray

    @property
    def points(self) -> np.ndarray:
        return self.offsets / float(2 ** self.depth)


@dataclass
class GridModel:
    """Kernel on a sorted grid of real states, with its provenance"""

    name: str
    grid: np.ndarray
    kernel: MarkovKernel
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if np.any(np.diff(self.grid) <= 0):
            raise BadParams("Grid points must be strictly increasing")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "model": self.name,
            "params": self.params,
            "grid": [float(v) for v in self.grid],
            "kernel": self.kernel.to_dict(),
        }


def _dyadic_parts(x0: Dyadic) -> Tuple[int, int]:
    """(numerator, binary digits) of a dyadic rational in [0, 1]"""
    value = Fraction(x0)
    if not 0 <= value <= 1:
        raise BadParams(f"Start point must lie in [0, 1], got {x0}")
    denominator = value.denominator
    digits = denominator.bit_length() - 1
    if denominator != 1 << digits:
        raise BadParams(f"Start point {x0} is not a dyadic rational")
    return value.numerator, digits


def bernoulli_exact_distribution(x0: Dyadic, t: int) -> DyadicDistribution:
    """
    Exact law of X_t for X' = (X + W) / 2 with W a fair coin

    X_t is uniform over x0 / 2^t + k / 2^t for k = 0..2^t - 1.

    Raises:
        DepthExceeded: digits of x0 plus t exceed DEPTH_CAP
    """
    if t < 0:
        raise BadParams(f"Step count must be nonnegative, got {t}")
    numerator, digits = _dyadic_parts(x0)
    depth = digits + t
    if depth > DEPTH_CAP:
        raise DepthExceeded(f"Dyadic depth {depth} exceeds cap {DEPTH_CAP}")
    count = 1 << t
    offsets = numerator + (np.arange(count, dtype=np.int64) << digits)
    weights = np.full(count, 1.0 / count)
    return DyadicDistribution(depth=depth, offsets=offsets, weights=weights)


def dyadic_pair(first: DyadicDistribution, second: DyadicDistribution) -> Tuple[Measure, Measure]:
    """Both laws as measures on the chain formed by the union of their supports"""
    depth = max(first.depth, second.depth)
    a = first.offsets << (depth - first.depth)
    b = second.offsets << (depth - second.depth)
    support = np.union1d(a, b)
    chain = Poset.chain(support.size)
    mu = np.zeros(support.size)
    nu = np.zeros(support.size)
    np.add.at(mu, np.searchsorted(support, a), first.weights)
    np.add.at(nu, np.searchsorted(support, b), second.weights)
    return Measure(chain, mu), Measure(chain, nu)


def dyadic_gamma(x0: Dyadic, y0: Dyadic, t: int) -> float:
    """gamma(P^t(x0, .), P^t(y0, .)) for the Bernoulli chain"""
    mu, nu = dyadic_pair(bernoulli_exact_distribution(x0, t), bernoulli_exact_distribution(y0, t))
    return gamma(mu, nu)


def bernoulli_gamma(t: int) -> float:
    """gamma(P^t_0, P^t_1), which equals 2^-t"""
    return dyadic_gamma(0, 1, t)


def bernoulli_profile(t_max: int) -> pd.DataFrame:
    """Rows (t, gamma, bound) with bound (1/2)^t gamma(delta_0, delta_1)"""
    start = bernoulli_gamma(0)
    records = [{"t": t, "gamma": bernoulli_gamma(t), "bound": 0.5 ** t * start}
               for t in range(t_max + 1)]
    return pd.DataFrame(records, columns=["t", "gamma", "bound"])


def bernoulli_coupling_sigma_bound(comonotone: bool = False) -> float:
    """
    P{X <= Y} for one step from x = 1 and y = 0

    Antithetic shocks give X = (1 + W) / 2 and Y = (1 - W) / 2; comonotone
    shocks give Y = W / 2 instead. Exact enumeration over W in {0, 1}.
    """
    ordered = Fraction(0)
    for w in (0, 1):
        x = Fraction(1 + w, 2)
        y = Fraction(w, 2) if comonotone else Fraction(1 - w, 2)
        if x <= y:
            ordered += Fraction(1, 2)
    return float(ordered)


def inventory_shock() -> Any:
    """W with ln W standard normal"""
    return stats.lognorm(s=1.0)


def inventory_model(capacity: float = 2.0, grid_size: int = 101,
                    n_cells: int = DEFAULT_SHOCK_CELLS, shock: Optional[Any] = None) -> GridModel:
    """
    Discretized inventory chain X' = (X - W)_+ for X > 0 and (K - W)_+ for X = 0

    Args:
        capacity: Restocking level K
        grid_size: Points in {0, K/(g-1), ..., K}
        n_cells: Equiprobable shock cells, one quantile (q + 1/2) / Q each
        shock: Frozen scipy.stats distribution of W; lognormal(0, 1) by default

    Returns:
        GridModel on the identity order, with kappa = P{W >= K}, the
        discretized kappa_grid and the slack 1 / Q in its params
    """
    if not capacity > 0:
        raise BadParams(f"Capacity must be positive, got {capacity}")
    if grid_size < 2:
        raise BadParams(f"Grid needs at least two points, got {grid_size}")
    if n_cells < 1:
        raise BadParams(f"Need at least one shock cell, got {n_cells}")
    shock = shock if shock is not None else inventory_shock()

    grid = np.linspace(0.0, capacity, grid_size)
    spacing = capacity / (grid_size - 1)
    demand = shock.ppf((np.arange(n_cells) + 0.5) / n_cells)

    level = np.where(grid > 0, grid, capacity)
    image = np.maximum(level[:, np.newaxis] - demand[np.newaxis, :], 0.0)
    # floor to the grid; the nudge absorbs division noise on exact grid points
    index = np.clip(np.floor(image / spacing + 1e-9).astype(int), 0, grid_size - 1)
    rows = np.zeros((grid_size, grid_size))
    states = np.repeat(np.arange(grid_size), n_cells)
    np.add.at(rows, (states, index.ravel()), 1.0 / n_cells)

    kappa = float(shock.sf(capacity))
    kappa_grid = float(np.count_nonzero(demand >= capacity) / n_cells)
    if kappa <= 0:
        logger.warning(f"Shock puts no mass above capacity {capacity}; no minorization")
    poset = Poset.antichain(grid_size, [float(v) for v in grid])
    params = {"capacity": float(capacity), "grid_size": int(grid_size), "n_cells": int(n_cells),
              "kappa": kappa, "kappa_grid": kappa_grid, "slack": 1.0 / n_cells}
    logger.info(f"Inventory model: K={capacity}, {grid_size} states, kappa={kappa:.6f}")
    return GridModel("inventory", grid, MarkovKernel(poset, rows), params)


def splitting_lattice_model(n: int = 8, s1: float = 0.3, s2: float = 0.3,
                            pivot: Optional[int] = None) -> GridModel:
    """
    Monotone chain on 0 < 1 < ... < n-1 satisfying a splitting condition

    With probability s1 every state jumps to 0, with probability s2 to n-1;
    otherwise the chain stays put or steps up (capped at n-1) with equal odds.
    Every map in the mixture is monotone, so the kernel is too.
    """
    if n < 2:
        raise BadParams(f"Lattice needs at least two states, got {n}")
    if not (0 < s1 < 1 and 0 < s2 < 1) or s1 + s2 > 1:
        raise BadParams(f"Split probabilities must lie in (0, 1) with sum <= 1, got {s1}, {s2}")
    pivot = n // 2 if pivot is None else int(pivot)
    if not 0 <= pivot < n:
        raise BadParams(f"Pivot {pivot} outside 0..{n - 1}")

    states = np.arange(n)
    lazy = 1.0 - s1 - s2
    maps = [np.zeros(n, dtype=int), np.full(n, n - 1), states, np.minimum(states + 1, n - 1)]
    weights = [s1, s2, lazy / 2.0, lazy / 2.0]
    kernel = MarkovKernel.from_maps(Poset.chain(n), maps, weights)
    params = {"n": int(n), "s1": float(s1), "s2": float(s2), "pivot": pivot}
    return GridModel("splitting", states.astype(float), kernel, params)


def two_state_model(stay_low: float = 0.7, jump_high: float = 0.8) -> GridModel:
    """Chain 0 < 1 with P(0, .) = (p, 1 - p) and P(1, .) = (1 - q, q)"""
    rows = [[stay_low, 1.0 - stay_low], [1.0 - jump_high, jump_high]]
    kernel = MarkovKernel(Poset.chain(2), rows)
    params = {"stay_low": float(stay_low), "jump_high": float(jump_high)}
    return GridModel("two-state", np.array([0.0, 1.0]), kernel, params)


MODELS = {
    "inventory": inventory_model,
    "splitting": splitting_lattice_model,
    "two-state": two_state_model,
}


def build_model(name: str, **params) -> GridModel:
    if name not in MODELS:
        raise BadParams(f"Unknown model {name!r}, expected one of {sorted(MODELS)}")
    return MODELS[name](**params)

