import numpy as np
import pytest
from hypothesis import given, seed, settings

from conftest import SEEDS, random_setup
from measure import Measure, SignedDiff, affinity, stochastically_dominated, tv_distance
from ordered_affinity import (
    ENUMERATE,
    FLOW,
    SYMMETRIC,
    UNIT,
    IncreasingFunction,
    beta,
    brute_force_deficiency,
    gamma,
    increasing_function_value,
    max_downset_deficiency,
    max_upset_deficiency,
    maximal_ordered_component_pair,
    ordered_affinity,
    ordered_transport_plan,
    pairwise_ordered_affinity,
    sup_increasing_function,
    upset_deficiency,
)
from poset import Poset, enumerate_upsets, is_decreasing, is_increasing
from random_instances import make_rng, random_dominated_pair, random_poset, random_probability
from stability_errors import DimMismatch, MassMismatch


def test_chain_example_deficiency(chain_pair):
    mu, nu = chain_pair
    value, witness = max_upset_deficiency(mu, nu)
    assert value == pytest.approx(0.5)
    assert witness.indices() in ([2], [1, 2])
    assert max_upset_deficiency(mu, nu, FLOW)[0] == pytest.approx(0.5)
    assert brute_force_deficiency(mu, nu)[0] == pytest.approx(0.5)


def test_equal_measures_have_no_deficiency(chain_pair):
    mu, _ = chain_pair
    value, witness = max_upset_deficiency(mu, mu)
    assert value == 0.0
    assert witness.indices() == []


@pytest.mark.parametrize("method", ["auto", FLOW, ENUMERATE])
def test_closure_with_unequal_masses_can_take_everything(chain3, method):
    value, witness = upset_deficiency(chain3, np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.5]), method)
    assert value == pytest.approx(0.5)
    assert witness.indices() == [0, 1, 2]


def test_identity_order_deficiency_is_half_tv(two_point_pair):
    mu, nu = two_point_pair
    value, _ = max_upset_deficiency(mu, nu)
    assert value == pytest.approx(tv_distance(mu, nu) / 2)


def test_deficiency_needs_equal_mass(chain3):
    with pytest.raises(MassMismatch):
        max_upset_deficiency(Measure.uniform(chain3), Measure.uniform(chain3).scaled(0.5))
    with pytest.raises(DimMismatch):
        max_upset_deficiency(Measure.uniform(chain3), Measure.uniform(Poset.antichain(3)))


def test_downset_witness(chain_pair):
    mu, nu = chain_pair
    value, witness = max_downset_deficiency(mu, nu)
    assert value == pytest.approx(0.5)
    assert is_decreasing(mu.poset, witness)
    assert nu.of_set(witness) - mu.of_set(witness) == pytest.approx(0.5)


def test_ordered_affinity_of_diracs(diamond):
    for x in range(4):
        for y in range(4):
            expected = 1.0 if diamond.precedes(x, y) else 0.0
            assert ordered_affinity(Measure.dirac(diamond, x), Measure.dirac(diamond, y)) == expected


def test_ordered_affinity_on_chain_example(chain_pair):
    mu, nu = chain_pair
    assert ordered_affinity(mu, nu) == pytest.approx(0.5)
    assert ordered_affinity(nu, mu) == pytest.approx(1.0)


def test_gamma_and_beta_on_chain_example(chain_pair):
    mu, nu = chain_pair
    assert gamma(mu, nu) == pytest.approx(0.5)
    assert beta(mu, nu) == pytest.approx(1.0)
    assert gamma(mu, mu) == 0.0
    assert beta(mu, mu) == 0.0


def test_identity_order_reduces_to_affinity(two_point_pair):
    mu, nu = two_point_pair
    assert ordered_affinity(mu, nu) == pytest.approx(affinity(mu, nu))
    assert gamma(mu, nu) == pytest.approx(0.4)
    assert gamma(mu, nu) == pytest.approx(tv_distance(mu, nu))


def test_component_pair_on_chain_example(chain_pair):
    mu, nu = chain_pair
    pair = maximal_ordered_component_pair(mu, nu)
    assert pair.mass == pytest.approx(0.5)
    assert pair.is_valid(mu, nu)
    residual_mu, residual_nu = pair.residuals(mu, nu)
    assert residual_mu.mass == pytest.approx(0.5)
    assert residual_nu.mass == pytest.approx(0.5)


def test_dominated_pair_is_its_own_component_pair(chain_pair):
    mu, nu = chain_pair
    pair = maximal_ordered_component_pair(nu, mu)
    assert pair.mass == pytest.approx(1.0)
    assert pair.mu_part.allclose(nu) and pair.nu_part.allclose(mu)


def test_incomparable_diracs_give_zero_pair(diamond):
    pair = maximal_ordered_component_pair(Measure.dirac(diamond, 1), Measure.dirac(diamond, 2))
    assert pair.mass == 0.0


def test_transport_plan_follows_the_order(diamond):
    mu = Measure(diamond, [0.4, 0.3, 0.2, 0.1])
    nu = Measure(diamond, [0.1, 0.2, 0.2, 0.5])
    plan = ordered_transport_plan(mu, nu)
    assert np.all(plan[~diamond.leq] == 0.0)
    assert np.all(plan.sum(axis=1) <= mu.weights + 1e-12)
    assert np.all(plan.sum(axis=0) <= nu.weights + 1e-12)
    assert plan.sum() == pytest.approx(ordered_affinity(mu, nu))


def test_sup_increasing_function_unit_range(chain_pair):
    mu, nu = chain_pair
    value, h = sup_increasing_function(SignedDiff.of(mu, nu), UNIT)
    assert value == pytest.approx(0.5)
    assert h.is_increasing() and h.in_range()
    assert increasing_function_value(SignedDiff.of(mu, nu), h) == pytest.approx(0.5)


def test_sup_increasing_function_symmetric_range_doubles(chain_pair):
    mu, nu = chain_pair
    value, h = sup_increasing_function(SignedDiff.of(mu, nu), SYMMETRIC)
    assert value == pytest.approx(1.0)
    assert h.range_kind == SYMMETRIC and h.in_range()
    assert increasing_function_value(SignedDiff.of(mu, nu), h) == pytest.approx(1.0)


def test_sup_of_zero_signed_measure(chain3):
    mu = Measure.uniform(chain3)
    assert sup_increasing_function(SignedDiff.of(mu, mu))[0] == 0.0


def test_symmetric_range_needs_zero_total(chain3):
    lam = SignedDiff.of(Measure.uniform(chain3), Measure.uniform(chain3).scaled(0.5))
    with pytest.raises(MassMismatch):
        sup_increasing_function(lam, SYMMETRIC)


def test_decreasing_function_is_rejected(chain_pair):
    mu, nu = chain_pair
    h = IncreasingFunction(mu.poset, np.array([1.0, 0.5, 0.0]))
    with pytest.raises(ValueError):
        increasing_function_value(SignedDiff.of(mu, nu), h)


def test_pairwise_matches_single_pairs(monotone_kernel):
    rows = monotone_kernel.rows
    table = pairwise_ordered_affinity(monotone_kernel.poset, rows)
    for x in range(monotone_kernel.n):
        for y in range(monotone_kernel.n):
            expected = ordered_affinity(monotone_kernel.row(x), monotone_kernel.row(y))
            assert table[x, y] == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("poset", [Poset.chain(5), Poset.antichain(5)])
def test_pairwise_fast_paths_match_flow(poset):
    rng = make_rng(17)
    rows = rng.dirichlet(np.ones(poset.n), size=poset.n)
    np.testing.assert_allclose(pairwise_ordered_affinity(poset, rows),
                               pairwise_ordered_affinity(poset, rows, FLOW), atol=1e-9)


@seed(19)
@settings(max_examples=80, deadline=None)
@given(SEEDS)
def test_flow_matches_enumeration(value):
    _, poset, mu, nu = random_setup(value)
    by_flow, witness = max_upset_deficiency(mu, nu, FLOW)
    by_scan, _ = max_upset_deficiency(mu, nu, ENUMERATE)
    by_auto, _ = max_upset_deficiency(mu, nu)
    assert by_flow == pytest.approx(by_scan, abs=1e-9)
    assert by_auto == pytest.approx(by_scan, abs=1e-9)
    assert is_increasing(poset, witness)
    assert mu.of_set(witness) - nu.of_set(witness) == pytest.approx(by_scan, abs=1e-9)


@seed(23)
@settings(max_examples=60, deadline=None)
@given(SEEDS)
def test_ordered_affinity_bounds(value):
    rng, _, mu, nu = random_setup(value)
    a_o = ordered_affinity(mu, nu)
    assert 0.0 <= a_o <= 1.0
    assert affinity(mu, nu) <= a_o + 1e-9
    c = float(rng.uniform(0.1, 3.0))
    assert ordered_affinity(mu.scaled(c), nu.scaled(c)) == pytest.approx(c * a_o, abs=1e-9)
    if stochastically_dominated(mu, nu):
        assert a_o == pytest.approx(1.0, abs=1e-9)


@seed(29)
@settings(max_examples=60, deadline=None)
@given(SEEDS)
def test_gamma_metric_and_sandwich(value):
    rng, poset, mu, nu = random_setup(value)
    rho = random_probability(rng, poset)
    g = gamma(mu, nu)
    assert g == pytest.approx(gamma(nu, mu), abs=1e-12)
    assert gamma(mu, rho) <= g + gamma(nu, rho) + 1e-9
    assert g <= beta(mu, nu) + 1e-9
    assert beta(mu, nu) <= 2 * g + 1e-9
    assert g <= tv_distance(mu, nu) + 1e-9


@seed(31)
@settings(max_examples=40, deadline=None)
@given(SEEDS)
def test_component_pair_invariants(value):
    _, _, mu, nu = random_setup(value)
    pair = maximal_ordered_component_pair(mu, nu)
    assert pair.is_valid(mu, nu, 1e-8)
    assert pair.mass == pytest.approx(ordered_affinity(mu, nu), abs=1e-9)
    residual_mu, residual_nu = pair.residuals(mu, nu)
    assert residual_mu.mass == pytest.approx(1.0 - pair.mass, abs=1e-9)
    assert residual_nu.mass == pytest.approx(1.0 - pair.mass, abs=1e-9)


@seed(37)
@settings(max_examples=40, deadline=None)
@given(SEEDS)
def test_unit_range_sup_equals_upset_sup(value):
    rng, poset, mu, nu = random_setup(value, high=6)
    lam = SignedDiff.of(mu, nu)
    best, h = sup_increasing_function(lam)
    assert best == pytest.approx(max(lam.integrate(s.membership) for s in enumerate_upsets(poset)),
                                 abs=1e-9)
    # random increasing functions never beat the supremum
    for _ in range(5):
        levels = rng.random(poset.n)
        values = np.array([levels[poset.leq[:, x]].max() for x in range(poset.n)])
        assert lam.integrate(values) <= best + 1e-9


@seed(41)
@settings(max_examples=30, deadline=None)
@given(SEEDS)
def test_dominated_pairs_have_full_ordered_affinity(value):
    rng = make_rng(value)
    poset = random_poset(rng, int(rng.integers(1, 8)), 0.4)
    lower, upper = random_dominated_pair(rng, poset)
    assert ordered_affinity(lower, upper) == pytest.approx(1.0, abs=1e-9)
