import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, seed, settings

from conftest import SEEDS
from maxflow import FlowNetwork, max_flow
from random_instances import make_rng
from stability_errors import BadNetwork


def networkx_value(net: FlowNetwork) -> float:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(net.n_nodes))
    for u, v, cap in net.arcs:
        if graph.has_edge(u, v):
            graph[u][v]["capacity"] += cap
        else:
            graph.add_edge(u, v, capacity=cap)
    return nx.maximum_flow_value(graph, net.source, net.sink)


def test_single_arc():
    result = max_flow(FlowNetwork.build(2, [(0, 1, 3.0)], 0, 1))
    assert result.value == pytest.approx(3.0)
    assert result.source_side() == [0]


def test_parallel_paths():
    net = FlowNetwork.build(4, [(0, 1, 1.0), (1, 3, 1.0), (0, 2, 2.0), (2, 3, 2.0)], 0, 3)
    assert max_flow(net).value == pytest.approx(3.0)


def test_diamond_bottleneck():
    arcs = [(0, 1, 1.0), (0, 2, 1.0), (1, 2, 0.5), (2, 3, 0.5), (1, 3, 0.0)]
    result = max_flow(FlowNetwork.build(4, arcs, 0, 3))
    assert result.value == pytest.approx(0.5)
    assert result.cut_capacity == pytest.approx(0.5)


def test_infinite_middle_arcs_are_never_cut():
    arcs = [(0, 1, 0.7), (1, 2, math.inf), (2, 3, 0.4)]
    result = max_flow(FlowNetwork.build(4, arcs, 0, 3))
    assert result.value == pytest.approx(0.4)
    np.testing.assert_allclose(result.arc_flows, [0.4, 0.4, 0.4])
    assert result.source_side() == [0, 1, 2]


def test_unbounded_path_is_rejected():
    with pytest.raises(BadNetwork):
        max_flow(FlowNetwork.build(3, [(0, 1, math.inf), (1, 2, math.inf)], 0, 2))


@pytest.mark.parametrize("arcs, source, sink", [
    ([(0, 1, -1.0)], 0, 1),
    ([(0, 1, float("nan"))], 0, 1),
    ([(0, 5, 1.0)], 0, 1),
    ([(0, 1, 1.0)], 0, 0),
])
def test_invalid_networks(arcs, source, sink):
    with pytest.raises(BadNetwork):
        FlowNetwork.build(2, arcs, source, sink)


def test_unreachable_sink_has_zero_flow():
    result = max_flow(FlowNetwork.build(3, [(0, 1, 2.0)], 0, 2))
    assert result.value == 0.0
    assert result.source_side() == [0, 1]


@seed(13)
@settings(max_examples=60, deadline=None)
@given(SEEDS)
def test_value_matches_networkx_and_cut(value):
    rng = make_rng(value)
    n = int(rng.integers(2, 9))
    arcs = []
    for u in range(n):
        for v in range(n):
            if u != v and rng.random() < 0.4:
                arcs.append((u, v, float(rng.uniform(0.0, 5.0))))
    net = FlowNetwork.build(n, arcs, 0, n - 1)
    result = max_flow(net)
    assert result.value == pytest.approx(networkx_value(net), abs=1e-9)
    assert result.cut_capacity == pytest.approx(result.value, abs=1e-9)

    # conservation and capacity on every arc
    balance = np.zeros(n)
    for (u, v, cap), flow in zip(net.arcs, result.arc_flows):
        assert -1e-12 <= flow <= cap + 1e-12
        balance[u] -= flow
        balance[v] += flow
    np.testing.assert_allclose(balance[1:n - 1], 0.0, atol=1e-9)
    assert balance[n - 1] == pytest.approx(result.value, abs=1e-9)
