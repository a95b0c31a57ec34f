import numpy as np
import pytest

from fedot.errors import DuplicateEdge, IsolatedNode, ValidationError
from fedot.network import Bounds, TypeDistribution, build_network, complete_network, feasibility_residual
from fedot.oracle import active_set_projection


def test_complete_bipartite_three_by_two():
    net = build_network([1, 2, 3], [1, 2], [(x, y) for x in (1, 2, 3) for y in (1, 2)])
    assert net.shape == (3, 2)
    assert net.n_edges == 6
    assert net.mask.all()
    assert net.sources_of == ((0, 1),) * 3
    assert net.types_of == ((0, 1, 2),) * 2


def test_no_edges_is_isolated():
    with pytest.raises(IsolatedNode):
        build_network([1], [1], [])


def test_unconnected_type_reported():
    with pytest.raises(IsolatedNode) as e:
        build_network([1, 2], [1], [(1, 1)])
    assert e.value.node == 2


def test_duplicate_edge():
    with pytest.raises(DuplicateEdge):
        build_network([1], [1], [(1, 1), (1, 1)])


def test_order_independent():
    a = build_network(["a", "b"], ["u", "v"], [("a", "u"), ("b", "v"), ("a", "v")])
    b = build_network(["a", "b"], ["u", "v"], [("a", "v"), ("a", "u"), ("b", "v")])
    assert a == b
    assert a.edges == b.edges


def test_adjacency_consistent():
    net = build_network([1, 2, 3], [1, 2], [(1, 1), (2, 2), (3, 1), (3, 2)])
    for x, ys in enumerate(net.sources_of):
        for y in ys:
            assert x in net.types_of[y]
    assert set(net.edges) == {(x, y) for x in range(3) for y in net.sources_of[x]}


def test_network_immutable():
    net = complete_network(2, 2)
    with pytest.raises(ValueError):
        net.mask[0, 0] = False


def test_bounds_validation():
    with pytest.raises(ValidationError):
        Bounds([1.0], [0.5], [0.0], [1.0])
    with pytest.raises(ValidationError):
        Bounds([0.0], [1.0], [-1.0], [1.0])
    b = Bounds.upper([2.0, 3.0], [5.0])
    assert np.array_equal(b.p_lo, [0.0, 0.0]) and np.array_equal(b.q_lo, [0.0])


def test_distribution_validation():
    with pytest.raises(ValidationError):
        TypeDistribution([0.5, 0.4], 10)
    with pytest.raises(ValidationError):
        TypeDistribution([1.0, 0.0], 10)
    d = TypeDistribution([0.25, 0.75], 8)
    assert np.array_equal(d.counts, [2.0, 6.0])


def test_zero_plan_residual_zero():
    net = complete_network(3, 2)
    b = Bounds.upper([2, 3, 4], [1200, 1200])
    d = TypeDistribution([0.5, 0.3, 0.2], 8000)
    assert feasibility_residual(net.zero_plan(), net, b, d) == 0.0


def test_interior_plan_residual_zero():
    net = complete_network(3, 2)
    b = Bounds.upper([2, 3, 4], [1200, 1200])
    d = TypeDistribution([0.5, 0.3, 0.2], 8000)
    assert feasibility_residual(np.full((3, 2), 0.01), net, b, d) == 0.0


def test_single_edge_source_cap_margin():
    # one edge, count 4: cap 8 means pi <= 2; plan 3 overshoots the cap by m = 4 units
    net = complete_network(1, 1)
    b = Bounds.upper([10.0], [8.0])
    d = TypeDistribution([1.0], 4.0)
    plan = np.array([[3.0]])
    m = 4 * 3.0 - 8.0
    expected = m / 4.0  # distance along the single coordinate
    got = feasibility_residual(plan, net, b, d)
    oracle = abs(3.0 - active_set_projection(plan, net, b, d.counts)[0, 0])
    assert got == pytest.approx(expected, abs=1e-9)
    assert got == pytest.approx(oracle, abs=1e-9)
