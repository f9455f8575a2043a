"""
Markov kernels on finite posets

Monotonicity, composition, the ordered Dobrushin coefficient sigma(P) and the
stability certificate built on it: when sigma(P^m) > 0 the kernel contracts
the total ordered variation, so fixed-point iteration converges to the unique
stationary distribution at a known geometric rate.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Union

import numpy as np
import pandas as pd

from measure import TOL, Measure, require_same_poset, resolve_poset
from ordered_affinity import (AUTO, beta, gamma, ordered_affinity,
                              pairwise_ordered_affinity, upset_deficiency)
from poset import ANTICHAIN, CHAIN, Poset, order_interval, product_poset
from stability_errors import (AssertionFailure, BadParams, DimMismatch,
                              MassMismatch, NoCertificate, NotMonotone)

logger = logging.getLogger(__name__)

SIGMA_POSITIVE = 1e-6
FIXED_POINT_TOL = 1e-10
RESIDUAL_BOUND = 1e-8
# rounds of stationary(); round k advances m 2^(k-1) steps
MAX_SQUARINGS = 64


class MarkovKernel:
    """
    Row-stochastic matrix indexed by the elements of a poset

    rows[i] is the distribution P(x_i, .).
    """

    __slots__ = ("poset", "rows")

    def __init__(self, poset: Poset, rows: Union[np.ndarray, Sequence[Sequence[float]]]):
        matrix = np.array(rows, dtype=float)
        if matrix.shape != (poset.n, poset.n):
            raise DimMismatch(f"Kernel has shape {matrix.shape}, expected ({poset.n}, {poset.n})")
        if not np.all(np.isfinite(matrix)):
            raise ValueError("Kernel entries must be finite")
        if np.any(matrix < -TOL):
            raise ValueError(f"Kernel entries must be nonnegative, got minimum {matrix.min()}")
        np.clip(matrix, 0.0, None, out=matrix)
        sums = matrix.sum(axis=1)
        bad = np.flatnonzero(np.abs(sums - 1.0) > TOL)
        if bad.size:
            raise MassMismatch(f"Kernel row {int(bad[0])} sums to {sums[bad[0]]!r}, expected 1")
        matrix /= sums[:, np.newaxis]
        matrix.setflags(write=False)
        self.poset = poset
        self.rows = matrix

    @classmethod
    def identity(cls, poset: Poset) -> "MarkovKernel":
        return cls(poset, np.eye(poset.n))

    @classmethod
    def from_maps(cls, poset: Poset, maps: Sequence[Sequence[int]],
                  weights: Optional[Sequence[float]] = None) -> "MarkovKernel":
        """
        Mixture of deterministic maps: P(x, .) = sum_k w_k delta_{f_k(x)}

        Args:
            poset: State space
            maps: Each map lists f(x) for x = 0..n-1
            weights: Mixture weights summing to 1; uniform when omitted
        """
        if not maps:
            raise ValueError("Need at least one map")
        if weights is None:
            weights = np.full(len(maps), 1.0 / len(maps))
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (len(maps),):
            raise DimMismatch(f"Got {weights.shape[0]} weights for {len(maps)} maps")
        rows = np.zeros((poset.n, poset.n))
        states = np.arange(poset.n)
        for f, w in zip(maps, weights):
            image = np.asarray(f, dtype=int)
            if image.shape != (poset.n,) or image.min() < 0 or image.max() >= poset.n:
                raise IndexError(f"Map {list(image)} does not send {poset.n} states into the poset")
            np.add.at(rows, (states, image), w)
        return cls(poset, rows)

    @property
    def n(self) -> int:
        return self.poset.n

    def row(self, i: int) -> Measure:
        """P_x as a Measure"""
        return Measure(self.poset, self.rows[self.poset.index_of(i)])

    def to_dict(self) -> Dict[str, Any]:
        return {"poset": self.poset.to_dict(), "rows": self.rows.tolist()}

    def __repr__(self) -> str:
        return f"MarkovKernel(n={self.n}, kind={self.poset.kind})"


@dataclass(frozen=True)
class StabilityCertificate:
    """Outcome of a successful stationary solve"""

    m: int
    sigma_m: float
    rate: float
    stationary: Measure
    residual: float
    iterations: int = 0

    def to_dict(self) -> Dict[str, Any]:
        return {
            "m": self.m,
            "sigma_m": self.sigma_m,
            "rate": self.rate,
            "stationary": [float(v) for v in self.stationary.weights],
            "residual": self.residual,
        }


@dataclass
class CheckReport:
    """Summary of a randomized inequality check"""

    name: str
    trials: int = 0
    max_ratio: float = 0.0
    violations: int = 0
    counterexample: Dict[str, Any] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def to_dict(self) -> Dict[str, Any]:
        return {"name": self.name, "trials": self.trials, "max_ratio": self.max_ratio,
                "violations": self.violations, "counterexample": self.counterexample}


@dataclass(frozen=True)
class MixingReport:
    """Splitting-type mixing condition between the least and greatest states"""

    pivot: int
    m: int
    up_from_least: float
    down_from_greatest: float
    lower_bound: float
    affinity: float

    @property
    def satisfied(self) -> bool:
        return self.up_from_least > 0 and self.down_from_greatest > 0


@dataclass(frozen=True)
class TightnessWitness:
    x: int
    y: int
    sigma: float
    gamma_rows: float
    bound: float


def load_kernel(source: Union[str, Path, Dict[str, Any]]) -> MarkovKernel:
    """
    Read a kernel from {"poset": <path or inline poset>, "rows": [[...], ...]}

    Args:
        source: Path to a JSON file, or the decoded document

    Returns:
        The MarkovKernel
    """
    base_dir = Path(".")
    if isinstance(source, dict):
        document = source
    else:
        path = Path(source)
        if not path.exists():
            raise FileNotFoundError(f"Kernel file not found: {path}")
        base_dir = path.parent
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    if "rows" not in document:
        raise ValueError("Kernel document needs a 'rows' matrix")
    poset = resolve_poset(document.get("poset"), base_dir)
    return MarkovKernel(poset, document["rows"])


def apply(mu: Measure, p: MarkovKernel) -> Measure:
    """mu P"""
    if not mu.poset.same_order(p.poset):
        raise DimMismatch("Measure and kernel live on different posets")
    return Measure(p.poset, mu.weights @ p.rows)


def compose(p: MarkovKernel, m: int) -> MarkovKernel:
    """P^m"""
    if m < 1:
        raise ValueError(f"Power must be at least 1, got {m}")
    return MarkovKernel(p.poset, np.linalg.matrix_power(p.rows, m))


def joint(mu: Measure, p: MarkovKernel) -> Measure:
    """mu (x) P on the product poset: weight of (x, y) is mu(x) P(x, y)"""
    if not mu.poset.same_order(p.poset):
        raise DimMismatch("Measure and kernel live on different posets")
    square = product_poset(p.poset, p.poset)
    return Measure(square, (mu.weights[:, np.newaxis] * p.rows).reshape(-1))


def is_monotone(p: MarkovKernel, tol: float = TOL) -> bool:
    """
    True iff P(x, .) is dominated by P(y, .) whenever x precedes y

    Dominance is transitive, so checking the cover pairs is enough.
    """
    poset = p.poset
    if poset.kind == ANTICHAIN:
        return True
    if poset.kind == CHAIN:
        tails = np.cumsum(p.rows[:, ::-1], axis=1)[:, ::-1]
        return bool(np.all(tails[:-1] <= tails[1:] + tol))
    for x, y in poset.covers():
        value, _ = upset_deficiency(poset, p.rows[x], p.rows[y])
        if value > tol:
            logger.debug(f"Rows {x} and {y} are not stochastically ordered (deficiency {value:.3g})")
            return False
    return True


def require_monotone(p: MarkovKernel) -> None:
    if not is_monotone(p):
        raise NotMonotone("Kernel is not monotone on its poset")


def sigma(p: MarkovKernel, method: str = AUTO) -> float:
    """Ordered Dobrushin coefficient: min over state pairs of alpha_O(P_x, P_y)"""
    affinities = pairwise_ordered_affinity(p.poset, p.rows, method)
    return float(np.clip(affinities.min(), 0.0, 1.0))


def find_contracting_power(p: MarkovKernel, m_max: int = 8):
    """
    Smallest m <= m_max with sigma(P^m) > SIGMA_POSITIVE

    Returns:
        (m, sigma_m, P^m)

    Raises:
        NoCertificate: Every power up to m_max has sigma below the cutoff
    """
    power = p
    for m in range(1, m_max + 1):
        if m > 1:
            power = MarkovKernel(p.poset, power.rows @ p.rows)
        sigma_m = sigma(power)
        logger.debug(f"sigma(P^{m}) = {sigma_m:.6g}")
        if sigma_m > SIGMA_POSITIVE:
            return m, sigma_m, power
    logger.warning(f"No power up to {m_max} has a positive ordered Dobrushin coefficient")
    raise NoCertificate(f"sigma(P^m) <= {SIGMA_POSITIVE} for every m <= {m_max}")


def stationary(p: MarkovKernel, m_max: int = 8) -> StabilityCertificate:
    """
    Certified stationary distribution of a monotone kernel

    Iterates mu <- mu Q from the uniform distribution, starting with Q = P^m
    for m the smallest power whose ordered Dobrushin coefficient is positive
    and squaring Q after every round, so round k advances m 2^(k-1) steps.
    Slowly contracting kernels settle in a few dozen rounds.

    Args:
        p: Monotone kernel
        m_max: Largest power tried

    Returns:
        StabilityCertificate with residual gamma(pi P, pi) <= RESIDUAL_BOUND

    Raises:
        NotMonotone: p is not monotone
        NoCertificate: No contracting power, or the round cap was reached
    """
    require_monotone(p)
    m, sigma_m, power = find_contracting_power(p, m_max)

    current = Measure.uniform(p.poset)
    residual = float("inf")
    rows = power.rows.copy()
    for iteration in range(1, MAX_SQUARINGS + 1):
        weights = current.weights @ rows
        following = Measure(p.poset, weights / weights.sum())
        step = gamma(following, current)
        current = following
        if step < FIXED_POINT_TOL:
            residual = gamma(apply(current, p), current)
            if residual <= RESIDUAL_BOUND:
                break
        rows = rows @ rows
        rows /= rows.sum(axis=1, keepdims=True)
    else:
        raise NoCertificate(f"Fixed-point iteration did not settle in {MAX_SQUARINGS} rounds")

    certificate = StabilityCertificate(m=m, sigma_m=sigma_m, rate=1.0 - sigma_m,
                                       stationary=current, residual=residual,
                                       iterations=iteration)
    logger.info(f"Certificate: m={m}, sigma_m={sigma_m:.6g}, residual={residual:.3g} "
                f"after {iteration} rounds")
    return certificate


def doeblin_minorization(p: MarkovKernel, m: int = 1):
    """
    Largest common minorizing measure of the rows of P^m

    Returns:
        (phi, phi(S)); under the identity order sigma(P^m) >= phi(S)
    """
    power = compose(p, m)
    phi = Measure(p.poset, power.rows.min(axis=0))
    return phi, phi.mass


def mixing_condition(p: MarkovKernel, pivot: int, m: int = 1) -> MixingReport:
    """
    P^m(a, [pivot, b]) and P^m(b, [a, pivot]) for least a and greatest b

    Both positive means the chain from the bottom can climb past the pivot and
    the chain from the top can fall below it; their product bounds
    alpha_O(P^m_b, P^m_a) from below.

    Raises:
        BadParams: The poset lacks a least or greatest element
    """
    poset = p.poset
    least, greatest = poset.least_element(), poset.greatest_element()
    if least is None or greatest is None:
        raise BadParams("Mixing condition needs a least and a greatest element")
    pivot = poset.index_of(pivot)
    power = compose(p, m)
    up = float(power.rows[least][order_interval(poset, pivot, greatest).membership].sum())
    down = float(power.rows[greatest][order_interval(poset, least, pivot).membership].sum())
    affinity = ordered_affinity(power.row(greatest), power.row(least))
    return MixingReport(pivot=pivot, m=m, up_from_least=up, down_from_greatest=down,
                        lower_bound=up * down, affinity=affinity)


def convergence_profile(p: MarkovKernel, certificate: StabilityCertificate, mu: Measure,
                        horizon: int) -> pd.DataFrame:
    """gamma(mu P^t, pi) against (1 - sigma_m)^floor(t/m) gamma(mu, pi)"""
    require_same_poset(mu, certificate.stationary)
    pi = certificate.stationary
    start = gamma(mu, pi)
    records = []
    current = mu
    for t in range(horizon + 1):
        bound = certificate.rate ** (t // certificate.m) * start
        records.append({"t": t, "gamma": gamma(current, pi), "bound": bound})
        current = apply(current, p)
    return pd.DataFrame(records, columns=["t", "gamma", "bound"])


def uniform_convergence_profile(p: MarkovKernel, certificate: StabilityCertificate,
                                horizon: int) -> pd.DataFrame:
    """
    sup over x of gamma(P^t_x, pi) against 2 (1 - sigma_m)^floor(t/m)

    sup_beta reports the Bhattacharya distance over the same rows; it is at
    most twice sup_gamma.
    """
    pi = certificate.stationary
    records = []
    power = np.eye(p.n)
    for t in range(horizon + 1):
        rows = [Measure(p.poset, power[x]) for x in range(p.n)]
        worst = max(gamma(row, pi) for row in rows)
        worst_beta = max(beta(row, pi) for row in rows)
        bound = 2.0 * certificate.rate ** (t // certificate.m)
        records.append({"t": t, "sup_gamma": worst, "sup_beta": worst_beta, "bound": bound})
        power = power @ p.rows
    return pd.DataFrame(records, columns=["t", "sup_gamma", "sup_beta", "bound"])


def tightness_witness(p: MarkovKernel) -> TightnessWitness:
    """
    Strictly ordered Dirac pair y < x minimizing alpha_O(P_x, P_y)

    For a monotone kernel gamma(P_x, P_y) = 1 - alpha_O(P_x, P_y) on such a
    pair while gamma(delta_x, delta_y) = 1, so the contraction bound
    (1 - sigma) * 1 is met with equality when the pair attains sigma.
    """
    poset = p.poset
    affinities = pairwise_ordered_affinity(poset, p.rows)
    sigma_p = float(np.clip(affinities.min(), 0.0, 1.0))
    best = None
    for x in range(poset.n):
        for y in range(poset.n):
            if x != y and poset.precedes(y, x):
                if best is None or affinities[x, y] < affinities[best]:
                    best = (x, y)
    if best is None:
        raise BadParams("Tightness witness needs a strictly comparable pair of states")
    x, y = best
    rows_gap = gamma(p.row(x), p.row(y))
    return TightnessWitness(x=x, y=y, sigma=sigma_p, gamma_rows=rows_gap, bound=1.0 - sigma_p)


def contraction_check(p: MarkovKernel, trials: int, seed: int, strict: bool = True) -> CheckReport:
    """gamma(mu P, nu P) <= (1 - sigma(P)) gamma(mu, nu) on random probability pairs"""
    require_monotone(p)
    rate = 1.0 - sigma(p)

    def holds(before: float, after: float) -> bool:
        return after <= rate * before + TOL

    return _pair_check(p, "contraction", trials, seed, strict, holds)


def nonexpansiveness_check(p: MarkovKernel, trials: int, seed: int, strict: bool = True) -> CheckReport:
    """gamma(mu P, nu P) <= gamma(mu, nu) on random probability pairs"""
    require_monotone(p)
    return _pair_check(p, "nonexpansiveness", trials, seed, strict,
                       lambda before, after: after <= before + TOL)


def sigma_measure_pairs_check(p: MarkovKernel, trials: int, seed: int,
                              strict: bool = True) -> CheckReport:
    """alpha_O(mu P, nu P) >= sigma(P) on random probability pairs"""
    from random_instances import make_rng, random_probability

    require_monotone(p)
    floor = sigma(p)
    rng = make_rng(seed)
    report = CheckReport(name="sigma_measure_pairs")
    for _ in range(trials):
        mu, nu = random_probability(rng, p.poset), random_probability(rng, p.poset)
        value = ordered_affinity(apply(mu, p), apply(nu, p))
        report.trials += 1
        if floor > 0:
            report.max_ratio = max(report.max_ratio, floor / max(value, TOL))
        if value < floor - TOL:
            _record_violation(report, mu, nu, {"alpha_O": value, "sigma": floor})
    return _finish(report, strict)


def _pair_check(p: MarkovKernel, name: str, trials: int, seed: int, strict: bool,
                holds) -> CheckReport:
    from random_instances import make_rng, random_probability

    rng = make_rng(seed)
    report = CheckReport(name=name)
    for _ in range(trials):
        mu, nu = random_probability(rng, p.poset), random_probability(rng, p.poset)
        before = gamma(mu, nu)
        after = gamma(apply(mu, p), apply(nu, p))
        report.trials += 1
        if before > TOL:
            report.max_ratio = max(report.max_ratio, after / before)
        if not holds(before, after):
            _record_violation(report, mu, nu, {"gamma_before": before, "gamma_after": after})
    return _finish(report, strict)


def _record_violation(report: CheckReport, mu: Measure, nu: Measure, values: Dict[str, float]) -> None:
    report.violations += 1
    if not report.counterexample:
        report.counterexample = {"mu": mu.weights.tolist(), "nu": nu.weights.tolist(), **values}


def _finish(report: CheckReport, strict: bool) -> CheckReport:
    logger.info(f"{report.name}: {report.trials} trials, {report.violations} violations, "
                f"max ratio {report.max_ratio:.6g}")
    if strict and report.violations:
        raise AssertionFailure(f"{report.name} failed on {report.violations} of {report.trials} pairs",
                               report.counterexample)
    return report
