import json

import pandas as pd
import pytest

from markov_kernel import MarkovKernel
from poset import Poset
from property_suite import PROPERTIES, REPORT_COLUMNS, PropertySuite, SuiteReport, register
from stability_errors import AssertionFailure, NotMonotone


def test_every_invariant_group_is_registered():
    for name in ("flow_matches_upset_enumeration", "gamma_metric_axioms", "gamma_contraction",
                 "order_maximal_coupling_attains_ordered_affinity", "max_flow_duality",
                 "bernoulli_gamma_halves", "increase_closure_is_smallest_upset"):
        assert name in PROPERTIES


def test_default_seed_passes():
    report = PropertySuite(seed=20240101, trials=3).run()
    assert list(report.table.columns) == REPORT_COLUMNS
    assert len(report.table) == len(PROPERTIES)
    assert report.passed, report.first_failure()
    assert (report.table["passed"] == 3).all()
    report.raise_for_failures()


def test_zero_trials_gives_an_empty_passing_report():
    report = PropertySuite(seed=1, trials=0).run()
    assert report.table.empty
    assert report.passed
    assert report.first_failure() is None


def test_runs_are_reproducible():
    names = ["gamma_metric_axioms", "component_pair_invariants"]
    first = PropertySuite(seed=5, trials=4, names=names).run().table
    second = PropertySuite(seed=5, trials=4, names=names).run().table
    pd.testing.assert_frame_equal(first, second)


def test_property_streams_do_not_depend_on_selection():
    alone = PropertySuite(seed=9, trials=4, names=["gamma_metric_axioms"]).run().table
    together = PropertySuite(seed=9, trials=4,
                             names=["flow_matches_upset_enumeration", "gamma_metric_axioms"]).run().table
    assert alone.iloc[0].to_dict() == together.iloc[1].to_dict()


def test_unknown_property_and_negative_trials():
    with pytest.raises(ValueError):
        PropertySuite(seed=1, trials=1, names=["no_such_property"])
    with pytest.raises(ValueError):
        PropertySuite(seed=1, trials=-1)


def test_injected_non_monotone_kernel_is_surfaced():
    swapped = MarkovKernel(Poset.chain(2), [[0.2, 0.8], [0.7, 0.3]])
    with pytest.raises(NotMonotone):
        PropertySuite(seed=1, trials=1, names=["gamma_contraction"], kernel=swapped).run()


def test_failures_carry_the_first_counterexample():
    @register("always_fails_for_test")
    def _fails(ctx):
        return {"draw": float(ctx.rng.random())}

    try:
        report = PropertySuite(seed=2, trials=3, names=["always_fails_for_test"]).run()
        assert not report.passed
        row = report.table.iloc[0]
        assert (row["passed"], row["failed"]) == (0, 3)
        failure = report.first_failure()
        assert failure["property"] == "always_fails_for_test"
        assert set(json.loads(row["counterexample"])) == {"draw"}
        with pytest.raises(AssertionFailure) as caught:
            report.raise_for_failures()
        assert caught.value.counterexample == failure
    finally:
        PROPERTIES.pop("always_fails_for_test")


def test_report_wraps_a_table():
    table = pd.DataFrame([{"property": "p", "trials": 1, "passed": 1, "failed": 0,
                           "counterexample": "null"}], columns=REPORT_COLUMNS)
    assert SuiteReport(table).passed
