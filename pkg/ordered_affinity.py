"""
Ordered affinity and the metrics built on it

The workhorse is the maximal up-set deficiency sup_I mu(I) - nu(I) over
increasing sets I. It is solved as a bipartite transportation problem on the
order graph: the max-flow value is the mass that can be moved upward, and the
min cut names a maximizing up-set. Chains and antichains use exact closed
forms instead of max-flow.
"""

import logging
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from maxflow import FlowNetwork, max_flow
from measure import (TOL, Measure, SignedDiff, require_equal_mass,
                     require_same_poset, stochastically_dominated)
from poset import (ANTICHAIN, CHAIN, DEFAULT_UPSET_CAP, ElementSet, Poset,
                   enumerate_upsets, increase_closure)
from stability_errors import DimMismatch, MassMismatch

logger = logging.getLogger(__name__)

AUTO = "auto"
FLOW = "flow"
ENUMERATE = "enumerate"
METHODS = (AUTO, FLOW, ENUMERATE)

UNIT = "unit"
SYMMETRIC = "symmetric"


@dataclass(frozen=True)
class ComponentPair:
    """
    Ordered component pair (mu', nu') of (mu, nu)

    mu' <= mu and nu' <= nu componentwise, equal masses, mu' dominated by nu'.
    """

    mu_part: Measure
    nu_part: Measure

    @property
    def mass(self) -> float:
        return self.mu_part.mass

    def residuals(self, mu: Measure, nu: Measure) -> Tuple[Measure, Measure]:
        """(mu - mu', nu - nu')"""
        return mu.residual(self.mu_part), nu.residual(self.nu_part)

    def is_valid(self, mu: Measure, nu: Measure, tol: float = TOL) -> bool:
        return (mu.dominates(self.mu_part, tol)
                and nu.dominates(self.nu_part, tol)
                and abs(self.mu_part.mass - self.nu_part.mass) <= tol
                and stochastically_dominated(self.mu_part, self.nu_part, tol))


@dataclass(frozen=True)
class IncreasingFunction:
    """Increasing function on a poset, valued in [0, 1] (unit) or [-1, 1] (symmetric)"""

    poset: Poset
    values: np.ndarray
    range_kind: str = UNIT

    def is_increasing(self, tol: float = TOL) -> bool:
        return _is_monotone_vector(self.poset, self.values, tol)

    def in_range(self, tol: float = TOL) -> bool:
        low = 0.0 if self.range_kind == UNIT else -1.0
        return bool(np.all(self.values >= low - tol) and np.all(self.values <= 1.0 + tol))


def max_upset_deficiency(mu: Measure, nu: Measure, method: str = AUTO) -> Tuple[float, ElementSet]:
    """
    sup over increasing I of mu(I) - nu(I), with a maximizing up-set

    Args:
        mu: First measure
        nu: Second measure, same poset and mass
        method: "auto" picks the closed form for chains and antichains,
            "flow" forces max-flow, "enumerate" scans every up-set

    Returns:
        (value, witness); value >= 0 since the empty set attains 0

    Raises:
        DimMismatch: Different posets
        MassMismatch: Different total masses
    """
    require_same_poset(mu, nu)
    require_equal_mass(mu, nu)
    return upset_deficiency(mu.poset, mu.weights, nu.weights, method)


def upset_deficiency(poset: Poset, mu_w: np.ndarray, nu_w: np.ndarray,
                     method: str = AUTO) -> Tuple[float, ElementSet]:
    """
    Maximum-weight closure: max over up-sets I of mu_w(I) - nu_w(I)

    Masses need not agree here; the full set S is a candidate like any other.
    """
    if method not in METHODS:
        raise ValueError(f"Unknown method {method!r}, expected one of {METHODS}")
    if method == ENUMERATE:
        return _deficiency_by_enumeration(poset, mu_w, nu_w)
    if method == AUTO and poset.kind == ANTICHAIN:
        diff = mu_w - nu_w
        witness = diff > 0
        return float(diff[witness].sum()), ElementSet(witness)
    if method == AUTO and poset.kind == CHAIN:
        return _chain_deficiency(mu_w, nu_w)

    plan, cut = _flow_plan(poset, mu_w, nu_w)
    value = max(0.0, float(mu_w.sum() - plan.sum()))
    if value <= 0.0:
        return 0.0, ElementSet.empty(poset.n)
    return value, increase_closure(poset, ElementSet(cut))


def brute_force_deficiency(mu: Measure, nu: Measure,
                           cap: int = DEFAULT_UPSET_CAP) -> Tuple[float, ElementSet]:
    """Exhaustive oracle over enumerate_upsets"""
    require_same_poset(mu, nu)
    return _deficiency_by_enumeration(mu.poset, mu.weights, nu.weights, cap)


def max_downset_deficiency(mu: Measure, nu: Measure, method: str = AUTO) -> Tuple[float, ElementSet]:
    """sup over decreasing D of nu(D) - mu(D); the witness complements an up-set witness"""
    value, witness = max_upset_deficiency(mu, nu, method)
    return value, witness.complement()


def ordered_affinity(mu: Measure, nu: Measure, method: str = AUTO) -> float:
    """
    alpha_O(mu, nu): largest mass of an ordered component pair

    Equal to 1 exactly when mu is stochastically dominated by nu.
    """
    value, _ = max_upset_deficiency(mu, nu, method)
    mass = mu.mass
    return float(min(mass, max(0.0, mass - value)))


def directed_deviation(mu: Measure, nu: Measure, method: str = AUTO) -> float:
    """g(mu, nu) = mass(mu) - alpha_O(mu, nu)"""
    return mu.mass - ordered_affinity(mu, nu, method)


def gamma(mu: Measure, nu: Measure, method: str = AUTO) -> float:
    """
    Total ordered variation 2 - alpha_O(mu, nu) - alpha_O(nu, mu)

    Evaluated as the sum of the two directed deficiencies, which is the same
    number without the cancellation against 2.
    """
    forward, _ = max_upset_deficiency(mu, nu, method)
    backward, _ = max_upset_deficiency(nu, mu, method)
    return forward + backward


def beta(mu: Measure, nu: Measure, method: str = AUTO) -> float:
    """Bhattacharya metric: sup over increasing h with |h| <= 1 of |mu(h) - nu(h)|"""
    forward, _ = max_upset_deficiency(mu, nu, method)
    backward, _ = max_upset_deficiency(nu, mu, method)
    return 2.0 * max(forward, backward)


def ordered_transport_plan(mu: Measure, nu: Measure, method: str = AUTO) -> np.ndarray:
    """
    Maximal transport of mu mass onto nu mass along the order

    Returns:
        n x n nonnegative matrix with plan[x, y] > 0 only when x precedes y,
        row sums <= mu, column sums <= nu and total alpha_O(mu, nu)
    """
    require_same_poset(mu, nu)
    if method not in (AUTO, FLOW):
        raise ValueError(f"Transport plans are built with 'auto' or 'flow', got {method!r}")
    poset = mu.poset
    if method == AUTO and poset.kind == ANTICHAIN:
        return np.diag(np.minimum(mu.weights, nu.weights))
    if method == AUTO and poset.kind == CHAIN:
        return _chain_plan(mu.weights, nu.weights)
    plan, _ = _flow_plan(poset, mu.weights, nu.weights)
    return plan


def maximal_ordered_component_pair(mu: Measure, nu: Measure, method: str = AUTO) -> ComponentPair:
    """
    A maximal ordered component pair, read off the optimal transport

    mu'(x) is the mass shipped out of x and nu'(y) the mass shipped into y.
    """
    require_equal_mass(mu, nu)
    plan = ordered_transport_plan(mu, nu, method)
    # shipped mass can exceed the source weight by rounding residue
    mu_part = np.minimum(plan.sum(axis=1), mu.weights)
    nu_part = np.minimum(plan.sum(axis=0), nu.weights)
    return ComponentPair(Measure(mu.poset, mu_part), Measure(nu.poset, nu_part))


def sup_increasing_function(lam: SignedDiff, range_kind: str = UNIT,
                            method: str = AUTO) -> Tuple[float, IncreasingFunction]:
    """
    Supremum of lambda(h) over increasing h with values in the given range

    Args:
        lam: Signed measure plus - minus
        range_kind: "unit" for h in [0, 1]; "symmetric" for h in [-1, 1],
            which is only supported when lambda(S) = 0
        method: Deficiency method, as in max_upset_deficiency

    Returns:
        (value, argmax) where argmax is the indicator of a maximizing up-set,
        or 2 * indicator - 1 on the symmetric range
    """
    poset = lam.poset
    value, witness = upset_deficiency(poset, lam.plus.weights, lam.minus.weights, method)
    indicator = witness.membership.astype(float)
    if range_kind == UNIT:
        return value, IncreasingFunction(poset, indicator, UNIT)
    if range_kind == SYMMETRIC:
        total = lam.total()
        if abs(total) > TOL * max(1.0, lam.plus.mass):
            raise MassMismatch(f"Symmetric range needs lambda(S) = 0, got {total!r}")
        return 2.0 * value, IncreasingFunction(poset, 2.0 * indicator - 1.0, SYMMETRIC)
    raise ValueError(f"Unknown range {range_kind!r}, expected '{UNIT}' or '{SYMMETRIC}'")


def increasing_function_value(lam: SignedDiff, h: IncreasingFunction, tol: float = TOL) -> float:
    """lambda(h), after checking that h is increasing and within its range"""
    if h.values.shape != (lam.poset.n,):
        raise DimMismatch(f"Function has shape {h.values.shape}, expected ({lam.poset.n},)")
    if not h.is_increasing(tol):
        raise ValueError("Function is not increasing on the poset")
    if not h.in_range(tol):
        raise ValueError(f"Function leaves its {h.range_kind} range")
    return lam.integrate(h.values)


def pairwise_ordered_affinity(poset: Poset, rows: np.ndarray, method: str = AUTO) -> np.ndarray:
    """
    A[x, y] = alpha_O(rows[x], rows[y]) for every pair of probability rows

    Chains and antichains are evaluated for all pairs at once.
    """
    rows = np.asarray(rows, dtype=float)
    n = rows.shape[0]
    if method == AUTO and poset.kind == ANTICHAIN:
        return np.minimum(rows[:, None, :], rows[None, :, :]).sum(axis=2)
    if method == AUTO and poset.kind == CHAIN:
        tails = np.cumsum(rows[:, ::-1], axis=1)[:, ::-1]
        gaps = (tails[:, None, :] - tails[None, :, :]).max(axis=2)
        mass = rows.sum(axis=1)
        return np.clip(mass[:, None] - np.maximum(gaps, 0.0), 0.0, None)

    result = np.empty((n, n))
    for x in range(n):
        for y in range(n):
            if x == y:
                result[x, y] = rows[x].sum()
                continue
            value, _ = upset_deficiency(poset, rows[x], rows[y], method)
            result[x, y] = max(0.0, rows[x].sum() - value)
    return result


def _chain_deficiency(mu_w: np.ndarray, nu_w: np.ndarray) -> Tuple[float, ElementSet]:
    n = mu_w.shape[0]
    if n == 0:
        return 0.0, ElementSet.empty(0)
    tails = np.cumsum((mu_w - nu_w)[::-1])[::-1]
    best = float(tails.max())
    if best <= 0.0:
        return 0.0, ElementSet.empty(n)
    # shortest suffix attaining the maximum
    start = int(np.flatnonzero(tails == best)[-1])
    mask = np.zeros(n, dtype=bool)
    mask[start:] = True
    return best, ElementSet(mask)


def _chain_plan(mu_w: np.ndarray, nu_w: np.ndarray) -> np.ndarray:
    """Greedy top-down matching; every open nu slot lies above the current element"""
    n = mu_w.shape[0]
    plan = np.zeros((n, n))
    open_slots = []
    for k in range(n - 1, -1, -1):
        if nu_w[k] > 0:
            open_slots.append([k, float(nu_w[k])])
        need = float(mu_w[k])
        while need > 0 and open_slots:
            slot = open_slots[-1]
            moved = min(need, slot[1])
            plan[k, slot[0]] += moved
            need -= moved
            slot[1] -= moved
            if slot[1] <= 0:
                open_slots.pop()
    return plan


def _flow_plan(poset: Poset, mu_w: np.ndarray, nu_w: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Optimal flow on source -> x -> y -> sink

    Returns the plan and the x-side of the min cut (elements of mu still
    carrying unshipped mass or reachable from them in the residual graph).
    """
    n = poset.n
    plan = np.zeros((n, n))
    sources = np.flatnonzero(mu_w > 0)
    targets = np.flatnonzero(nu_w > 0)
    if sources.size == 0 or targets.size == 0:
        cut = mu_w > 0
        return plan, cut

    source, sink = 0, 2 * n + 1
    arcs = []
    for x in sources:
        arcs.append((source, 1 + int(x), float(mu_w[x])))
    pair_start = len(arcs)
    leq = poset.leq
    pairs = [(int(x), int(y)) for x in sources for y in targets if leq[x, y]]
    for x, y in pairs:
        arcs.append((1 + x, 1 + n + y, float("inf")))
    for y in targets:
        arcs.append((1 + n + int(y), sink, float(nu_w[y])))

    result = max_flow(FlowNetwork.build(2 * n + 2, arcs, source, sink))
    for k, (x, y) in enumerate(pairs):
        plan[x, y] = result.arc_flows[pair_start + k]
    cut = np.zeros(n, dtype=bool)
    cut[sources] = result.min_cut[1 + sources]
    logger.debug(f"Transport of {result.value:.12g} over {len(pairs)} ordered pairs on {n} elements")
    return plan, cut


def _deficiency_by_enumeration(poset: Poset, mu_w: np.ndarray, nu_w: np.ndarray,
                               cap: int = DEFAULT_UPSET_CAP) -> Tuple[float, ElementSet]:
    best, witness = 0.0, ElementSet.empty(poset.n)
    diff = mu_w - nu_w
    for upset in enumerate_upsets(poset, cap):
        value = float(diff[upset.membership].sum())
        if value > best:
            best, witness = value, upset
    return best, witness


def _is_monotone_vector(poset: Poset, values: np.ndarray, tol: float) -> bool:
    if poset.kind == ANTICHAIN:
        return True
    if poset.kind == CHAIN:
        return bool(np.all(np.diff(values) >= -tol))
    i, j = np.nonzero(poset.leq)
    return bool(np.all(values[i] <= values[j] + tol))
