"""
Couplings of probability measures on a poset

A Coupling keeps a structured part ``plan`` (mass a placed on chosen pairs)
and two residual marginals of mass 1 - a that are joined independently. The
maximal coupling puts mu ^ nu on the diagonal; the order-maximal coupling puts
the optimal upward transport on the order graph, reaching P{X <= Y} = alpha_O.

The absorbing coupled kernel runs two copies of a monotone chain so that once
X_t <= Y_t holds it holds forever; Monte Carlo over that kernel estimates the
order coupling bound.
"""

import logging
import threading
from concurrent.futures import ThreadPoolExecutor
from functools import cached_property
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from numpy.random import Generator, SeedSequence

from markov_kernel import MarkovKernel, require_monotone
from measure import TOL, Measure, require_same_poset, stochastically_dominated
from ordered_affinity import AUTO, gamma, ordered_transport_plan
from poset import ANTICHAIN, CHAIN, Poset
from random_instances import spawn_rngs
from stability_errors import AssertionFailure, NotDominated, SizeError

logger = logging.getLogger(__name__)

# residual mass below this is dropped; marginals stay within TOL
RESIDUAL_DROP = 1e-10
MAX_DENSE_PAIRS = 1024
DEFAULT_BLOCK_SIZE = 1024

TRAJECTORY_COLUMNS = ["t", "p_never_leq", "p_never_geq", "se_leq", "se_geq", "gamma_exact", "bound"]
AUDIT_COLUMNS = ["p_not_leq_now", "p_not_geq_now"]


class Coupling:
    """
    Joint law with marginals (mu, nu)

    joint = plan + outer(residual_mu, residual_nu) / (1 - a), a = plan mass.
    """

    def __init__(self, mu: Measure, nu: Measure, plan: np.ndarray,
                 residual_mu: Optional[np.ndarray] = None,
                 residual_nu: Optional[np.ndarray] = None):
        require_same_poset(mu, nu)
        n = mu.n
        plan = np.clip(np.asarray(plan, dtype=float), 0.0, None)
        if plan.shape != (n, n):
            raise ValueError(f"Plan has shape {plan.shape}, expected ({n}, {n})")
        res_mu = np.zeros(n) if residual_mu is None else np.clip(residual_mu, 0.0, None)
        res_nu = np.zeros(n) if residual_nu is None else np.clip(residual_nu, 0.0, None)
        if min(res_mu.sum(), res_nu.sum()) <= RESIDUAL_DROP:
            res_mu, res_nu = np.zeros(n), np.zeros(n)

        self.mu = mu
        self.nu = nu
        self.plan = plan
        self.residual_mu = res_mu
        self.residual_nu = res_nu
        self.plan_mass = float(plan.sum())
        self.residual_mass = float(res_mu.sum())

    @property
    def poset(self) -> Poset:
        return self.mu.poset

    @cached_property
    def joint(self) -> np.ndarray:
        if self.residual_mass <= 0:
            return self.plan
        return self.plan + np.outer(self.residual_mu, self.residual_nu) / self.residual_mass

    @property
    def ordered_mass(self) -> float:
        """P{X <= Y}"""
        poset = self.poset
        if poset.kind == ANTICHAIN:
            return float(np.trace(self.joint))
        if poset.kind == CHAIN:
            return float(np.triu(self.joint).sum())
        return float(self.joint[poset.leq].sum())

    @property
    def diagonal_mass(self) -> float:
        """P{X = Y}"""
        return float(np.trace(self.joint))

    def check_marginals(self, tol: float = TOL) -> bool:
        joint = self.joint
        return (bool(np.all(joint >= -tol))
                and np.allclose(joint.sum(axis=1), self.mu.weights, rtol=0.0, atol=tol)
                and np.allclose(joint.sum(axis=0), self.nu.weights, rtol=0.0, atol=tol))

    @cached_property
    def _tables(self):
        total = self.plan_mass + self.residual_mass
        plan_cdf = np.cumsum(self.plan.ravel())
        mu_cdf = np.cumsum(self.residual_mu)
        nu_cdf = np.cumsum(self.residual_nu)
        return total, plan_cdf, mu_cdf, nu_cdf

    def sample(self, u1: np.ndarray, u2: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Map uniforms (u1, u2) to pairs (x, y) by inverse CDF

        u1 picks a cell of the plan in row-major order when it falls below the
        plan mass; otherwise (u1 - a) and u2 draw the two residuals
        independently.
        """
        u1 = np.asarray(u1, dtype=float)
        u2 = np.asarray(u2, dtype=float)
        n = self.mu.n
        total, plan_cdf, mu_cdf, nu_cdf = self._tables
        scaled = u1 * total
        xs = np.empty(u1.shape, dtype=np.int64)
        ys = np.empty(u1.shape, dtype=np.int64)

        in_plan = scaled < self.plan_mass
        if self.residual_mass <= 0:
            in_plan[:] = True
        if in_plan.any():
            cells = _inverse_cdf(plan_cdf, scaled[in_plan], self.plan.ravel())
            xs[in_plan], ys[in_plan] = np.divmod(cells, n)
        rest = ~in_plan
        if rest.any():
            xs[rest] = _inverse_cdf(mu_cdf, scaled[rest] - self.plan_mass, self.residual_mu)
            ys[rest] = _inverse_cdf(nu_cdf, u2[rest] * self.residual_mass, self.residual_nu)
        return xs, ys


def _inverse_cdf(cdf: np.ndarray, u: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """First index whose cumulative weight exceeds u"""
    index = np.searchsorted(cdf, u, side="right")
    # rounding can push u past the last cell with weight
    return np.minimum(index, np.flatnonzero(weights > 0)[-1])


def independent_coupling(mu: Measure, nu: Measure) -> Coupling:
    """Product coupling mu x nu"""
    return Coupling(mu, nu, np.zeros((mu.n, mu.n)), mu.weights, nu.weights)


def maximal_coupling(mu: Measure, nu: Measure) -> Coupling:
    """
    Classical maximal coupling: P{X = Y} = alpha(mu, nu)

    Args:
        mu: First marginal
        nu: Second marginal on the same poset

    Returns:
        Coupling with mu ^ nu on the diagonal
    """
    require_same_poset(mu, nu)
    common = np.minimum(mu.weights, nu.weights)
    return Coupling(mu, nu, np.diag(common), mu.weights - common, nu.weights - common)


def order_maximal_coupling(mu: Measure, nu: Measure, method: str = AUTO) -> Coupling:
    """
    Coupling attaining P{X <= Y} = alpha_O(mu, nu)

    The optimal upward transport carries mass alpha_O on ordered pairs and the
    leftover marginals are joined independently.
    """
    require_same_poset(mu, nu)
    plan = ordered_transport_plan(mu, nu, method)
    residual_mu = mu.weights - plan.sum(axis=1)
    residual_nu = nu.weights - plan.sum(axis=0)
    return Coupling(mu, nu, plan, residual_mu, residual_nu)


def nachbin_strassen_coupling(mu: Measure, nu: Measure) -> Coupling:
    """
    Coupling supported on the order graph, for mu dominated by nu

    Raises:
        NotDominated: mu is not stochastically dominated by nu
    """
    if not stochastically_dominated(mu, nu):
        raise NotDominated("First measure is not stochastically dominated by the second")
    coupling = order_maximal_coupling(mu, nu)
    return Coupling(mu, nu, coupling.plan)


def perturb_coupling(c: Coupling, rng: Generator, size: int = 20) -> Coupling:
    """
    Random rebalancing along 2x2 cycles

    Moves t from cells (i, j), (k, l) to (i, l), (k, j), which keeps both
    marginals and nonnegativity.
    """
    joint = np.array(c.joint, dtype=float)
    n = joint.shape[0]
    if n < 2:
        return Coupling(c.mu, c.nu, joint)
    for _ in range(size):
        i, k = rng.choice(n, size=2, replace=False)
        j, l = rng.choice(n, size=2, replace=False)
        room = min(joint[i, j], joint[k, l])
        if room <= 0:
            continue
        t = rng.uniform(0.0, room)
        joint[i, j] -= t
        joint[k, l] -= t
        joint[i, l] += t
        joint[k, j] += t
    return Coupling(c.mu, c.nu, joint)


class CoupledKernel:
    """
    Markov kernel M on pairs whose marginals are both P

    Row (x, y) is the order-maximal coupling of (P_x, P_y). For a monotone P
    that coupling sits on the order graph whenever x <= y, so the order graph
    is absorbing. Rows are built on demand and cached.
    """

    def __init__(self, p: MarkovKernel):
        self.kernel = p
        self.poset = p.poset
        self._rows: Dict[Tuple[int, int], Coupling] = {}
        self._lock = threading.Lock()

    @property
    def n(self) -> int:
        return self.poset.n

    def row(self, x: int, y: int) -> Coupling:
        key = (int(x), int(y))
        coupling = self._rows.get(key)
        if coupling is None:
            coupling = order_maximal_coupling(self.kernel.row(key[0]), self.kernel.row(key[1]))
            with self._lock:
                self._rows.setdefault(key, coupling)
        return coupling

    @property
    def transition(self) -> np.ndarray:
        """Dense (n*n) x (n*n) matrix; pair (x, y) has index x * n + y"""
        n = self.n
        if n * n > MAX_DENSE_PAIRS:
            raise SizeError(f"Dense coupled kernel needs {n * n} pair states, limit {MAX_DENSE_PAIRS}")
        matrix = np.empty((n * n, n * n))
        for x in range(n):
            for y in range(n):
                matrix[x * n + y] = self.row(x, y).joint.ravel()
        return matrix

    def check_marginals(self, tol: float = TOL) -> bool:
        """Both projections of every row reproduce the matching rows of P"""
        for x in range(self.n):
            for y in range(self.n):
                if not self.row(x, y).check_marginals(tol):
                    logger.debug(f"Row ({x}, {y}) has wrong marginals")
                    return False
        return True

    def is_absorbing(self, tol: float = TOL) -> bool:
        """Rows from ordered pairs keep all mass on ordered pairs"""
        for x in range(self.n):
            for y in range(self.n):
                if self.poset.precedes(x, y) and self.row(x, y).ordered_mass < 1.0 - tol:
                    return False
        return True

    def step(self, xs: np.ndarray, ys: np.ndarray, rng: Generator) -> Tuple[np.ndarray, np.ndarray]:
        """One transition for a batch of pair states"""
        u1 = rng.random(xs.shape[0])
        u2 = rng.random(xs.shape[0])
        codes = xs * self.n + ys
        next_x = np.empty_like(xs)
        next_y = np.empty_like(ys)
        unique, inverse = np.unique(codes, return_inverse=True)
        for k, code in enumerate(unique):
            members = inverse == k
            x, y = divmod(int(code), self.n)
            next_x[members], next_y[members] = self.row(x, y).sample(u1[members], u2[members])
        return next_x, next_y


def absorbing_coupled_kernel(p: MarkovKernel) -> CoupledKernel:
    """
    Coupled kernel with the order graph absorbing

    Raises:
        NotMonotone: p is not monotone
    """
    require_monotone(p)
    return CoupledKernel(p)


def ordered_pairs(poset: Poset, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Elementwise x <= y for index arrays"""
    if poset.kind == CHAIN:
        return xs <= ys
    if poset.kind == ANTICHAIN:
        return xs == ys
    return poset.leq[xs, ys]


def simulate_coupled_chain(m: CoupledKernel, x0: int, y0: int, horizon: int, replications: int,
                           seed: int, block_size: int = DEFAULT_BLOCK_SIZE,
                           workers: int = 1) -> pd.DataFrame:
    """
    Monte Carlo estimates of P{X_j not<= Y_j for all j <= t} and the reverse

    The forward chain starts at (x0, y0); the reversed chain starts at
    (y0, x0) and yields P{Y_j not<= X_j for all j <= t}. Replications are
    split into blocks, each with its own stream spawned from ``seed``, so the
    result does not depend on ``workers``.

    Args:
        m: Coupled kernel
        x0: Start of X
        y0: Start of Y
        horizon: Last time recorded
        replications: Number of simulated paths per direction
        seed: Root seed
        block_size: Paths per block
        workers: Threads running blocks

    Returns:
        DataFrame with columns t, p_never_leq, p_never_geq, se_leq, se_geq,
        plus p_not_leq_now, p_not_geq_now and the count of paths where the
        never-ordered and not-ordered-now events disagree
    """
    poset = m.poset
    x0, y0 = poset.index_of(x0), poset.index_of(y0)
    if horizon < 0:
        raise ValueError(f"Horizon must be nonnegative, got {horizon}")
    if replications < 1:
        raise ValueError(f"Need at least one replication, got {replications}")

    sizes = [min(block_size, replications - start) for start in range(0, replications, block_size)]
    forward_seq, reverse_seq = SeedSequence(seed).spawn(2)
    jobs = [((x0, y0), rng, size) for rng, size in zip(spawn_rngs(forward_seq, len(sizes)), sizes)]
    jobs += [((y0, x0), rng, size) for rng, size in zip(spawn_rngs(reverse_seq, len(sizes)), sizes)]

    def run(job):
        start, rng, size = job
        return _simulate_block(m, start, horizon, size, rng)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(run, jobs))
    else:
        outcomes = [run(job) for job in jobs]

    half = len(sizes)
    forward = np.sum([o[0] for o in outcomes[:half]], axis=0)
    reverse = np.sum([o[0] for o in outcomes[half:]], axis=0)
    forward_now = np.sum([o[1] for o in outcomes[:half]], axis=0)
    reverse_now = np.sum([o[1] for o in outcomes[half:]], axis=0)
    mismatches = int(sum(o[2] for o in outcomes))

    r = float(replications)
    p_leq, p_geq = forward / r, reverse / r
    frame = pd.DataFrame({
        "t": np.arange(horizon + 1),
        "p_never_leq": p_leq,
        "p_never_geq": p_geq,
        "se_leq": np.sqrt(p_leq * (1.0 - p_leq) / r),
        "se_geq": np.sqrt(p_geq * (1.0 - p_geq) / r),
        "p_not_leq_now": forward_now / r,
        "p_not_geq_now": reverse_now / r,
    })
    frame.attrs["absorbing_mismatches"] = mismatches
    frame.attrs["replications"] = replications
    if mismatches:
        logger.warning(f"{mismatches} path-steps left the order graph after entering it")
    logger.info(f"Simulated {replications} coupled paths per direction over {horizon} steps")
    return frame


def _simulate_block(m: CoupledKernel, start: Tuple[int, int], horizon: int, size: int,
                    rng: Generator):
    xs = np.full(size, start[0], dtype=np.int64)
    ys = np.full(size, start[1], dtype=np.int64)
    never = np.ones(size, dtype=bool)
    never_counts = np.zeros(horizon + 1)
    now_counts = np.zeros(horizon + 1)
    mismatches = 0
    for t in range(horizon + 1):
        if t > 0:
            xs, ys = m.step(xs, ys, rng)
        not_now = ~ordered_pairs(m.poset, xs, ys)
        never &= not_now
        never_counts[t] = never.sum()
        now_counts[t] = not_now.sum()
        mismatches += int(np.count_nonzero(never != not_now))
    return never_counts, now_counts, mismatches


def coupling_bound_table(m: CoupledKernel, x0: int, y0: int, horizon: int, replications: int,
                         seed: int, block_size: int = DEFAULT_BLOCK_SIZE,
                         workers: int = 1) -> pd.DataFrame:
    """
    Trajectory statistics with the exact gamma(delta_x0 P^t, delta_y0 P^t)

    ``bound`` is the Monte Carlo estimate of the right-hand side, the sum of
    the two never-ordered probabilities.
    """
    frame = simulate_coupled_chain(m, x0, y0, horizon, replications, seed, block_size, workers)
    p = m.kernel
    mu = Measure.dirac(p.poset, x0)
    nu = Measure.dirac(p.poset, y0)
    exact = []
    for _ in range(horizon + 1):
        exact.append(gamma(mu, nu))
        mu = Measure(p.poset, mu.weights @ p.rows)
        nu = Measure(p.poset, nu.weights @ p.rows)
    frame["gamma_exact"] = exact
    frame["bound"] = frame["p_never_leq"] + frame["p_never_geq"]
    table = frame[TRAJECTORY_COLUMNS + AUDIT_COLUMNS].copy()
    table.attrs.update(frame.attrs)
    return table


def bound_holds(frame: pd.DataFrame, z: float = 3.0) -> bool:
    """
    gamma_exact <= the z-level upper confidence limit of the estimated bound

    Each never-ordered probability gets a Wilson score upper limit, which stays
    positive when no simulated path survives. Frames without a replication count
    fall back to z combined standard errors.
    """
    replications = frame.attrs.get("replications")
    if not replications:
        slack = z * np.sqrt(frame["se_leq"] ** 2 + frame["se_geq"] ** 2)
        return bool(np.all(frame["gamma_exact"] <= frame["bound"] + slack + TOL))
    upper = (_wilson_upper(frame["p_never_leq"].to_numpy(), replications, z)
             + _wilson_upper(frame["p_never_geq"].to_numpy(), replications, z))
    return bool(np.all(frame["gamma_exact"].to_numpy() <= upper + TOL))


def _wilson_upper(p: np.ndarray, r: float, z: float) -> np.ndarray:
    z2 = z * z
    centre = p + z2 / (2.0 * r)
    spread = z * np.sqrt(p * (1.0 - p) / r + z2 / (4.0 * r * r))
    return np.minimum(1.0, (centre + spread) / (1.0 + z2 / r))


def check_absorbing(frame: pd.DataFrame) -> None:
    mismatches = frame.attrs.get("absorbing_mismatches", 0)
    if mismatches:
        raise AssertionFailure(f"Order graph was left on {mismatches} path-steps",
                               {"mismatches": mismatches})
