import numpy as np
import pytest
from hypothesis import given, seed, settings

from conftest import SEEDS, random_setup
from measure import (
    Measure,
    SignedDiff,
    affinity,
    expectation,
    inf_measure,
    load_measure,
    stochastically_dominated,
    tv_distance,
)
from poset import ElementSet, Poset, enumerate_upsets
from stability_errors import DimMismatch, MassMismatch


def test_probability_checks_mass(chain3):
    with pytest.raises(MassMismatch):
        Measure.probability(chain3, [0.5, 0.2, 0.2])
    mu = Measure.probability(chain3, [0.2, 0.3, 0.5 + 1e-12])
    assert mu.mass == pytest.approx(1.0, abs=1e-15)


def test_weights_are_validated(chain3):
    with pytest.raises(DimMismatch):
        Measure(chain3, [0.5, 0.5])
    with pytest.raises(ValueError):
        Measure(chain3, [0.5, -0.1, 0.6])
    with pytest.raises(ValueError):
        Measure(chain3, [np.nan, 0.5, 0.5])


def test_rounding_residue_is_clipped(chain3):
    mu = Measure(chain3, [-1e-12, 0.5, 0.5])
    assert mu.weights[0] == 0.0


def test_tv_distance_on_chain_example(chain_pair):
    mu, nu = chain_pair
    assert tv_distance(mu, nu) == pytest.approx(1.0)
    assert tv_distance(mu, mu) == 0.0


def test_tv_distance_of_distinct_diracs(chain3):
    assert tv_distance(Measure.dirac(chain3, 0), Measure.dirac(chain3, 2)) == pytest.approx(2.0)


def test_inf_measure_and_affinity(two_point_pair):
    mu, nu = two_point_pair
    np.testing.assert_allclose(inf_measure(mu, nu).weights, [0.3, 0.5])
    assert affinity(mu, nu) == pytest.approx(0.8)
    assert affinity(mu, mu) == pytest.approx(mu.mass)
    assert tv_distance(mu, nu) == pytest.approx(2 * (1 - affinity(mu, nu)))


def test_inf_of_distinct_diracs_is_zero(chain3):
    assert inf_measure(Measure.dirac(chain3, 0), Measure.dirac(chain3, 1)).mass == 0.0


def test_different_posets_are_rejected(chain3):
    with pytest.raises(DimMismatch):
        affinity(Measure.uniform(chain3), Measure.uniform(Poset.antichain(3)))


def test_stochastic_dominance_on_chain(chain_pair):
    mu, nu = chain_pair
    assert stochastically_dominated(nu, mu)
    assert not stochastically_dominated(mu, nu)
    assert stochastically_dominated(mu, mu)


def test_dominance_under_identity_order_means_equality(two_point_pair):
    mu, nu = two_point_pair
    assert not stochastically_dominated(mu, nu)
    assert stochastically_dominated(mu, Measure(mu.poset, [0.5, 0.5]))


def test_dominance_needs_equal_mass(chain3):
    assert not stochastically_dominated(Measure.uniform(chain3), Measure.uniform(chain3).scaled(0.5))


def test_signed_diff(chain_pair):
    mu, nu = chain_pair
    lam = SignedDiff.of(mu, nu)
    np.testing.assert_allclose(lam.weights, [-0.5, 0.0, 0.5])
    assert lam.total() == pytest.approx(0.0)
    assert lam.integrate([0, 0, 1]) == pytest.approx(0.5)
    assert lam.negated().integrate([0, 0, 1]) == pytest.approx(-0.5)
    with pytest.raises(DimMismatch):
        lam.integrate([1, 1])


def test_expectation(chain_pair):
    mu, _ = chain_pair
    assert expectation(mu, [0, 1, 2]) == pytest.approx(1.5)


def test_load_measure_resolves_poset_path(tmp_path):
    (tmp_path / "p.json").write_text('{"labels": [0, 1, 2], "covers": [[0, 1], [1, 2]]}')
    (tmp_path / "m.json").write_text('{"poset": "p.json", "weights": [0.2, 0.3, 0.5]}')
    mu = load_measure(tmp_path / "m.json")
    assert mu.poset.is_chain
    np.testing.assert_allclose(mu.weights, [0.2, 0.3, 0.5])
    assert load_measure({"poset": 2, "weights": [0.5, 0.5]}).poset.is_antichain


def test_load_measure_rejects_bad_mass(tmp_path):
    with pytest.raises(MassMismatch):
        load_measure({"poset": 2, "weights": [0.5, 0.6]})
    with pytest.raises(FileNotFoundError):
        load_measure(tmp_path / "none.json")


@seed(3)
@settings(max_examples=50, deadline=None)
@given(SEEDS)
def test_affinity_bounds_and_homogeneity(value):
    rng, _, mu, nu = random_setup(value)
    a = affinity(mu, nu)
    assert -1e-12 <= a <= min(mu.mass, nu.mass) + 1e-12
    c = float(rng.uniform(0.1, 3.0))
    assert affinity(mu.scaled(c), nu.scaled(c)) == pytest.approx(c * a, abs=1e-9)
    assert tv_distance(mu, nu) == pytest.approx(2 * (1 - a), abs=1e-9)


@seed(5)
@settings(max_examples=40, deadline=None)
@given(SEEDS)
def test_dominance_matches_upset_scan(value):
    _, poset, mu, nu = random_setup(value, high=6)
    by_scan = all(mu.of_set(s) <= nu.of_set(s) + 1e-9 for s in enumerate_upsets(poset))
    assert stochastically_dominated(mu, nu) == by_scan


def test_of_set(chain_pair):
    mu, _ = chain_pair
    assert mu.of_set(ElementSet.of(3, [1, 2])) == pytest.approx(1.0)
