"""
Randomized property suite

Every invariant of the library is registered here as a named property. A
property receives a TrialContext (its own random stream, plus an optional
injected kernel) and returns None when the instance passes, or a dict
describing the counterexample.
"""

import json
import logging
from dataclasses import dataclass
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import pandas as pd
from numpy.random import Generator, SeedSequence, default_rng

from coupling import (absorbing_coupled_kernel, independent_coupling,
                      maximal_coupling, order_maximal_coupling,
                      perturb_coupling)
from markov_kernel import (MarkovKernel, apply, compose, convergence_profile,
                           is_monotone, joint, require_monotone, sigma,
                           stationary, tightness_witness)
from maxflow import FlowNetwork, max_flow
from measure import (TOL, Measure, SignedDiff, affinity, stochastically_dominated,
                     tv_distance)
from models import bernoulli_gamma, splitting_lattice_model
from ordered_affinity import (FLOW, SYMMETRIC, UNIT, beta, brute_force_deficiency,
                              directed_deviation, gamma, increasing_function_value,
                              max_downset_deficiency, max_upset_deficiency,
                              maximal_ordered_component_pair, ordered_affinity,
                              sup_increasing_function)
from poset import (ElementSet, Poset, enumerate_upsets, increase_closure,
                   is_decreasing, is_increasing)
from random_instances import (doeblin_kernel, random_dominated_pair,
                              random_monotone_kernel, random_poset,
                              random_probability)
from stability_errors import AssertionFailure

logger = logging.getLogger(__name__)

Counterexample = Optional[Dict[str, Any]]

PROPERTIES: Dict[str, Callable[["TrialContext"], Counterexample]] = {}

REPORT_COLUMNS = ["property", "trials", "passed", "failed", "counterexample"]

DOEBLIN_HORIZON = 12


def register(name: str):
    def wrap(func):
        PROPERTIES[name] = func
        return func
    return wrap


class TrialContext:
    """Random source for one trial, with an optional kernel override"""

    def __init__(self, rng: Generator, kernel: Optional[MarkovKernel] = None):
        self.rng = rng
        self.injected = kernel

    def poset(self, low: int = 1, high: int = 8) -> Poset:
        n = int(self.rng.integers(low, high + 1))
        return random_poset(self.rng, n, float(self.rng.uniform(0.1, 0.6)))

    def probability(self, poset: Poset) -> Measure:
        return random_probability(self.rng, poset)

    def kernel(self, low: int = 2, high: int = 6) -> MarkovKernel:
        if self.injected is not None:
            require_monotone(self.injected)
            return self.injected
        return random_monotone_kernel(self.rng, self.poset(low, high))


@dataclass
class SuiteReport:
    """Per-property pass counts and the first counterexample of each failure"""

    table: pd.DataFrame

    @property
    def passed(self) -> bool:
        return bool((self.table["failed"] == 0).all())

    def first_failure(self) -> Optional[Dict[str, Any]]:
        failing = self.table[self.table["failed"] > 0]
        if failing.empty:
            return None
        row = failing.iloc[0]
        return {"property": row["property"], "counterexample": json.loads(row["counterexample"])}

    def raise_for_failures(self) -> None:
        failure = self.first_failure()
        if failure is not None:
            raise AssertionFailure(f"Property {failure['property']} failed", failure)


class PropertySuite:
    """
    Runs the registered properties over seeded random instances

    Each property draws from its own stream spawned from ``seed``, so adding
    or removing a property leaves the instances of the others unchanged.
    """

    def __init__(self, seed: int, trials: int, names: Optional[List[str]] = None,
                 kernel: Optional[MarkovKernel] = None):
        unknown = sorted(set(names or []) - set(PROPERTIES))
        if unknown:
            raise ValueError(f"Unknown properties: {unknown}")
        if trials < 0:
            raise ValueError(f"Trial count must be nonnegative, got {trials}")
        self.seed = seed
        self.trials = trials
        self.names = list(names) if names else sorted(PROPERTIES)
        self.kernel = kernel

    def run(self) -> SuiteReport:
        records = []
        if self.trials == 0:
            return SuiteReport(pd.DataFrame(records, columns=REPORT_COLUMNS))

        streams = SeedSequence(self.seed).spawn(len(PROPERTIES))
        stream_of = dict(zip(sorted(PROPERTIES), streams))
        for name in self.names:
            rng = default_rng(stream_of[name])
            check = PROPERTIES[name]
            passed = failed = 0
            first: Counterexample = None
            for _ in range(self.trials):
                outcome = check(TrialContext(rng, self.kernel))
                if outcome is None:
                    passed += 1
                else:
                    failed += 1
                    first = first or outcome
            if failed:
                logger.warning(f"Property {name}: {failed} of {self.trials} trials failed")
            else:
                logger.debug(f"Property {name}: {passed} trials passed")
            records.append({"property": name, "trials": self.trials, "passed": passed,
                            "failed": failed,
                            "counterexample": json.dumps(_plain(first), sort_keys=True)})
        report = SuiteReport(pd.DataFrame(records, columns=REPORT_COLUMNS))
        logger.info(f"Property suite: {len(records)} properties, "
                    f"{int(report.table['failed'].sum())} failing trials")
        return report


def _plain(value: Any) -> Any:
    if isinstance(value, Measure):
        return [float(v) for v in value.weights]
    if isinstance(value, dict):
        return {k: _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def _close(a: float, b: float, tol: float = TOL) -> bool:
    return abs(a - b) <= tol


# poset

@register("increase_closure_is_smallest_upset")
def _closure_minimal(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    b = ElementSet(ctx.rng.random(p.n) < 0.3)
    closure = increase_closure(p, b)
    if not is_increasing(p, closure) or not b.issubset(closure):
        return {"set": b.indices(), "closure": closure.indices()}
    for upset in enumerate_upsets(p):
        if b.issubset(upset) and not closure.issubset(upset):
            return {"set": b.indices(), "closure": closure.indices(), "upset": upset.indices()}
    return None


@register("upset_complement_is_downset")
def _complement_duality(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    s = ElementSet(ctx.rng.random(p.n) < 0.5)
    rest = ~s.membership
    # everything below a member of the complement stays in it
    closed_below = not np.any(p.leq[:, rest] & ~rest[:, np.newaxis])
    if is_increasing(p, s) != closed_below or is_decreasing(p, s.complement()) != closed_below:
        return {"set": s.indices()}
    return None


@register("upset_counts")
def _upset_counts(ctx: TrialContext) -> Counterexample:
    n = int(ctx.rng.integers(1, 9))
    chain, antichain = len(enumerate_upsets(Poset.chain(n))), len(enumerate_upsets(Poset.antichain(n)))
    if chain != n + 1 or antichain != 2 ** n:
        return {"n": n, "chain": chain, "antichain": antichain}
    return None


# measure

@register("affinity_bounds_and_homogeneity")
def _affinity_bounds(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    c = float(ctx.rng.uniform(0.0, 3.0))
    a = affinity(mu, nu)
    if not -TOL <= a <= min(mu.mass, nu.mass) + TOL:
        return {"mu": mu, "nu": nu, "affinity": a}
    if not _close(affinity(mu.scaled(c), nu.scaled(c)), c * a):
        return {"mu": mu, "nu": nu, "scale": c}
    if not _close(affinity(mu, mu), mu.mass):
        return {"mu": mu}
    return None


@register("tv_equals_twice_affinity_gap")
def _tv_affinity(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    if abs(tv_distance(mu, nu) - 2.0 * (1.0 - affinity(mu, nu))) > 1e-12:
        return {"mu": mu, "nu": nu}
    return None


@register("dominance_antisymmetry")
def _dominance(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    lower, upper = random_dominated_pair(ctx.rng, p)
    if not stochastically_dominated(lower, upper):
        return {"lower": lower, "upper": upper}
    if stochastically_dominated(upper, lower) and not lower.allclose(upper, 1e-7):
        return {"lower": lower, "upper": upper}
    return None


# maxflow

@register("max_flow_duality")
def _flow_duality(ctx: TrialContext) -> Counterexample:
    n = int(ctx.rng.integers(2, 9))
    arcs = [(int(u), int(v), float(ctx.rng.uniform(0.0, 2.0)))
            for u in range(n) for v in range(n) if u != v and ctx.rng.random() < 0.4]
    result = max_flow(FlowNetwork.build(n, arcs, 0, n - 1))
    balance = np.zeros(n)
    for (u, v, cap), f in zip(arcs, result.arc_flows):
        if f < -TOL or f > cap + TOL:
            return {"arc": [u, v, cap], "flow": f}
        balance[u] -= f
        balance[v] += f
    if np.any(np.abs(balance[1:-1]) > TOL) or not _close(balance[-1], result.value):
        return {"arcs": arcs, "balance": balance}
    if not _close(result.value, result.cut_capacity):
        return {"arcs": arcs, "value": result.value, "cut": result.cut_capacity}
    return None


# ordered affinity

@register("flow_matches_upset_enumeration")
def _oracle(ctx: TrialContext) -> Counterexample:
    p = ctx.poset(1, 10)
    mu, nu = ctx.probability(p), ctx.probability(p)
    flow_value, witness = max_upset_deficiency(mu, nu, FLOW)
    auto_value, _ = max_upset_deficiency(mu, nu)
    brute_value, _ = brute_force_deficiency(mu, nu)
    attained = mu.of_set(witness) - nu.of_set(witness)
    if (not _close(flow_value, brute_value) or not _close(auto_value, brute_value)
            or not is_increasing(p, witness) or not _close(attained, flow_value)):
        return {"mu": mu, "nu": nu, "flow": flow_value, "auto": auto_value, "brute": brute_value}
    return None


@register("ordered_affinity_bounds_and_homogeneity")
def _ordered_affinity_bounds(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    a = ordered_affinity(mu, nu)
    if not -TOL <= a <= 1.0 + TOL:
        return {"mu": mu, "nu": nu, "alpha_O": a}
    c = float(ctx.rng.uniform(0.0, 3.0))
    if not _close(ordered_affinity(mu.scaled(c), nu.scaled(c)), c * a):
        return {"mu": mu, "nu": nu, "scale": c}
    lower, upper = random_dominated_pair(ctx.rng, p)
    if not _close(ordered_affinity(lower, upper), 1.0):
        return {"lower": lower, "upper": upper}
    return None


@register("affinity_below_ordered_affinity")
def _affinity_below(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    if affinity(mu, nu) > ordered_affinity(mu, nu) + TOL:
        return {"mu": mu, "nu": nu}
    return None


@register("deficiencies_below_gamma")
def _deficiency_below_gamma(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    up_forward, _ = max_upset_deficiency(mu, nu)
    up_backward, _ = max_upset_deficiency(nu, mu)
    down_value, down_witness = max_downset_deficiency(mu, nu)
    g = gamma(mu, nu)
    if max(up_forward, up_backward) > g + TOL or down_value > g + TOL:
        return {"mu": mu, "nu": nu, "gamma": g}
    if not is_decreasing(p, down_witness):
        return {"mu": mu, "nu": nu, "witness": down_witness.indices()}
    if not _close(nu.of_set(down_witness) - mu.of_set(down_witness), down_value):
        return {"mu": mu, "nu": nu, "witness": down_witness.indices()}
    return None


@register("gamma_metric_axioms")
def _gamma_metric(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu, rho = ctx.probability(p), ctx.probability(p), ctx.probability(p)
    if not _close(gamma(mu, nu), gamma(nu, mu)) or not _close(gamma(mu, mu), 0.0):
        return {"mu": mu, "nu": nu}
    if gamma(mu, rho) > gamma(mu, nu) + gamma(nu, rho) + TOL:
        return {"mu": mu, "nu": nu, "rho": rho}
    if gamma(mu, nu) <= TOL and not mu.allclose(nu, 1e-7):
        return {"mu": mu, "nu": nu}
    return None


@register("gamma_beta_sandwich")
def _sandwich(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    g, b = gamma(mu, nu), beta(mu, nu)
    if not g - TOL <= b <= 2.0 * g + TOL:
        return {"mu": mu, "nu": nu, "gamma": g, "beta": b}
    return None


@register("component_pair_invariants")
def _component_pair(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    pair = maximal_ordered_component_pair(mu, nu)
    if not pair.is_valid(mu, nu, 1e-8) or not _close(pair.mass, ordered_affinity(mu, nu), 1e-8):
        return {"mu": mu, "nu": nu, "mu_part": pair.mu_part, "nu_part": pair.nu_part}
    return None


@register("increasing_function_supremum")
def _function_sup(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    lam = SignedDiff.of(mu, nu)
    unit, h = sup_increasing_function(lam, UNIT)
    symmetric, h_sym = sup_increasing_function(lam, SYMMETRIC)
    deficiency, _ = max_upset_deficiency(mu, nu)
    if not _close(unit, deficiency) or not _close(symmetric, 2.0 * deficiency):
        return {"mu": mu, "nu": nu, "unit": unit, "symmetric": symmetric}
    if not _close(increasing_function_value(lam, h), unit):
        return {"mu": mu, "nu": nu, "argmax": h.values}
    if not _close(increasing_function_value(lam, h_sym), symmetric):
        return {"mu": mu, "nu": nu, "argmax": h_sym.values}
    return None


# coupling

@register("order_maximal_coupling_attains_ordered_affinity")
def _coupling_attainment(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    target = ordered_affinity(mu, nu)
    coupling = order_maximal_coupling(mu, nu)
    if not coupling.check_marginals() or not _close(coupling.ordered_mass, target):
        return {"mu": mu, "nu": nu, "ordered_mass": coupling.ordered_mass, "alpha_O": target}
    for candidate in (perturb_coupling(coupling, ctx.rng), maximal_coupling(mu, nu),
                      independent_coupling(mu, nu)):
        if candidate.ordered_mass > target + TOL:
            return {"mu": mu, "nu": nu, "ordered_mass": candidate.ordered_mass, "alpha_O": target}
    return None


@register("gamma_from_order_maximal_couplings")
def _directed_decomposition(ctx: TrialContext) -> Counterexample:
    p = ctx.poset()
    mu, nu = ctx.probability(p), ctx.probability(p)
    forward = order_maximal_coupling(mu, nu).ordered_mass
    backward = order_maximal_coupling(nu, mu).ordered_mass
    if not _close(gamma(mu, nu), (1.0 - forward) + (1.0 - backward)):
        return {"mu": mu, "nu": nu}
    return None


@register("coupled_kernel_marginals_and_absorption")
def _coupled_kernel(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel(2, 5)
    m = absorbing_coupled_kernel(p)
    if not m.check_marginals() or not m.is_absorbing():
        return {"rows": p.rows}
    return None


# kernel

@register("ordered_affinity_increases_under_monotone_kernel")
def _affinity_up(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    if ordered_affinity(apply(mu, p), apply(nu, p)) < ordered_affinity(mu, nu) - TOL:
        return {"rows": p.rows, "mu": mu, "nu": nu}
    return None


@register("ordered_affinity_monotone_in_arguments")
def _affinity_mid(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu_low, mu = random_dominated_pair(ctx.rng, p.poset)
    nu, nu_high = random_dominated_pair(ctx.rng, p.poset)
    if ordered_affinity(apply(mu, p), apply(nu, p)) > ordered_affinity(apply(mu_low, p), apply(nu_high, p)) + TOL:
        return {"rows": p.rows, "mu": mu, "nu": nu, "mu_low": mu_low, "nu_high": nu_high}
    return None


@register("joint_law_keeps_ordered_affinity")
def _affinity_joint(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel(2, 5)
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    joined = ordered_affinity(joint(mu, p), joint(nu, p))
    if not _close(joined, ordered_affinity(mu, nu)):
        return {"rows": p.rows, "mu": mu, "nu": nu, "joint": joined}
    return None


@register("sigma_bounds_pushed_pairs")
def _sigma_lower(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    if ordered_affinity(apply(mu, p), apply(nu, p)) < sigma(p) - TOL:
        return {"rows": p.rows, "mu": mu, "nu": nu}
    return None


@register("residual_pair_controls_deviation")
def _residual_control(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    mu_rest, nu_rest = maximal_ordered_component_pair(mu, nu).residuals(mu, nu)
    whole = directed_deviation(apply(mu, p), apply(nu, p))
    rest = directed_deviation(apply(mu_rest, p), apply(nu_rest, p))
    if whole > rest + 1e-8:
        return {"rows": p.rows, "mu": mu, "nu": nu, "whole": whole, "rest": rest}
    return None


@register("gamma_nonexpansive")
def _nonexpansive(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    if gamma(apply(mu, p), apply(nu, p)) > gamma(mu, nu) + TOL:
        return {"rows": p.rows, "mu": mu, "nu": nu}
    return None


@register("gamma_contraction")
def _contraction(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    bound = (1.0 - sigma(p)) * gamma(mu, nu)
    if gamma(apply(mu, p), apply(nu, p)) > bound + TOL:
        return {"rows": p.rows, "mu": mu, "nu": nu}
    return None


@register("monotone_powers")
def _monotone_powers(ctx: TrialContext) -> Counterexample:
    p = ctx.kernel()
    for m in (2, 3):
        if not is_monotone(compose(p, m)):
            return {"rows": p.rows, "m": m}
    return None


@register("doeblin_minorization_bounds_sigma")
def _doeblin(ctx: TrialContext) -> Counterexample:
    n = int(ctx.rng.integers(2, 8))
    eps = float(ctx.rng.uniform(0.1, 0.5))
    p = doeblin_kernel(ctx.rng, n, eps)
    if sigma(p) < eps - TOL:
        return {"rows": p.rows, "eps": eps}
    mu, nu = ctx.probability(p.poset), ctx.probability(p.poset)
    if not _close(gamma(mu, nu), tv_distance(mu, nu)):
        return {"mu": mu, "nu": nu}
    # along the certified path gamma is the total variation of the same iterates
    certificate = stationary(p)
    profile = convergence_profile(p, certificate, mu, DOEBLIN_HORIZON)
    current = mu
    for row in profile.itertuples(index=False):
        tv = tv_distance(current, certificate.stationary)
        if not _close(row.gamma, tv) or row.gamma > row.bound + TOL:
            return {"rows": p.rows, "mu": mu, "t": row.t, "gamma": row.gamma,
                    "tv": tv, "bound": row.bound}
        current = apply(current, p)
    return None


@register("contraction_is_tight_on_chains")
def _tightness(ctx: TrialContext) -> Counterexample:
    n = int(ctx.rng.integers(2, 7))
    p = random_monotone_kernel(ctx.rng, Poset.chain(n))
    witness = tightness_witness(p)
    if not _close(witness.gamma_rows, witness.bound):
        return {"rows": p.rows, "x": witness.x, "y": witness.y,
                "gamma_rows": witness.gamma_rows, "bound": witness.bound}
    return None


# models

@register("bernoulli_gamma_halves")
def _bernoulli(ctx: TrialContext) -> Counterexample:
    t = int(ctx.rng.integers(0, 13))
    value = bernoulli_gamma(t)
    if value != 2.0 ** -t or value > 0.5 ** t * bernoulli_gamma(0):
        return {"t": t, "gamma": value}
    return None


@register("splitting_sigma_bound")
def _splitting(ctx: TrialContext) -> Counterexample:
    n = int(ctx.rng.integers(2, 10))
    s1 = float(ctx.rng.uniform(0.05, 0.5))
    s2 = float(ctx.rng.uniform(0.05, 1.0 - s1))
    model = splitting_lattice_model(n, s1, s2)
    if not is_monotone(model.kernel) or sigma(model.kernel) < s1 * s2 - TOL:
        return {"n": n, "s1": s1, "s2": s2}
    return None

