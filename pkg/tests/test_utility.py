import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fedot.errors import NonDifferentiable, ValidationError
from fedot.instance import CASE_DELTA, CASE_GAMMA, case_study_instance
from fedot.network import TypeDistribution, complete_network
from fedot.oracle import linear_program_solve
from fedot.utility import (Callback, Linear, Logarithmic, Sqrt, UtilityModel, expected_cost, local_cost,
                           subgradient_local_cost, total_objective)


def single(target, source):
    net = complete_network(1, 1)
    return net, UtilityModel(net, target, source)


def test_zero_plan_objective_zero():
    inst = case_study_instance()
    assert total_objective(np.zeros((3, 2)), inst.utility, inst.dist) == 0.0


def test_single_edge_objective():
    net, u = single(Linear([[2.0]]), Linear([[3.0]]))
    assert total_objective(np.ones((1, 1)), u, TypeDistribution([1.0], 10)) == 50.0


def test_case_objective_at_optimum_matches_lp():
    inst = case_study_instance()
    res = linear_program_solve(inst)
    assert total_objective(res.plan, inst.utility, inst.dist) == pytest.approx(res.objective, rel=1e-12)


def test_local_cost_values():
    inst = case_study_instance()
    assert local_cost(np.zeros((3, 2)), inst.utility, 0) == 0.0
    plan = np.zeros((3, 2))
    plan[0] = [1.0, 1.0]
    assert local_cost(plan, inst.utility, 0) == -10.0
    net, u = single(Sqrt([[1.0]]), Linear([[0.0]]))
    assert local_cost(np.array([[4.0]]), u, 0) == pytest.approx(-2.0)


def test_subgradient_values():
    net, u = single(Linear([[2.0]]), Linear([[3.0]]))
    assert subgradient_local_cost(np.array([[0.7]]), u, 0)[0, 0] == -5.0
    net, u = single(Linear([[0.0]]), Linear([[0.0]]))
    assert np.all(subgradient_local_cost(np.array([[0.7]]), u, 0) == 0.0)
    net, u = single(Sqrt([[1.0]]), Linear([[0.0]]))
    assert subgradient_local_cost(np.array([[1.0]]), u, 0)[0, 0] == pytest.approx(-0.5)


def test_subgradient_infinite_raises():
    net, u = single(Sqrt([[1.0]]), Linear([[0.0]]))
    with pytest.raises(NonDifferentiable):
        subgradient_local_cost(np.array([[0.0]]), u, 0)


def test_callback_without_derivative():
    net = complete_network(1, 1)
    u = UtilityModel(net, Callback(lambda p: 2 * p), Linear([[1.0]]))
    with pytest.raises(NonDifferentiable):
        subgradient_local_cost(np.array([[1.0]]), u, 0)


def test_rejects_decreasing_and_convex():
    net = complete_network(1, 1)
    with pytest.raises(ValidationError):
        UtilityModel(net, Linear([[-1.0]]), Linear([[1.0]]))
    with pytest.raises(ValidationError):
        UtilityModel(net, Callback(lambda p: p ** 2, lambda p: 2 * p), Linear([[1.0]]))


def test_rejects_wrong_shape():
    with pytest.raises(ValidationError):
        UtilityModel.linear(complete_network(2, 2), [[1.0, 2.0]], [[1.0, 2.0]])


def test_expected_cost_is_scaled_objective():
    inst = case_study_instance()
    plan = np.array([[0.1, 0.2], [0.3, 0.1], [0.5, 0.6]])
    assert expected_cost(plan, inst.utility, inst.dist.prob) == pytest.approx(
        -total_objective(plan, inst.utility, inst.dist) / inst.dist.population, rel=1e-14)


def test_default_lipschitz_sum():
    inst = case_study_instance()
    d0 = (np.array(CASE_DELTA) + np.array(CASE_GAMMA)).max()
    assert inst.utility.lipschitz_sum == pytest.approx(d0 * np.sqrt(12))


@given(st.floats(0.0, 50.0), st.lists(st.floats(0.0, 5.0), min_size=6, max_size=6))
def test_linear_objective_homogeneous(a, vals):
    inst = case_study_instance()
    plan = np.array(vals).reshape(3, 2)
    lhs = total_objective(a * plan, inst.utility, inst.dist)
    rhs = a * total_objective(plan, inst.utility, inst.dist)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-9)


@given(st.integers(0, 10_000))
def test_subgradient_matches_finite_differences(seed):
    rng = np.random.default_rng(seed)
    net = complete_network(2, 2)
    u = UtilityModel.logarithmic(net, rng.uniform(0.1, 3, (2, 2)), rng.uniform(0.1, 3, (2, 2)))
    plan = rng.uniform(0.0, 3.0, (2, 2))
    x = int(rng.integers(0, 2))
    g = subgradient_local_cost(plan, u, x)
    h = 1e-6
    for i in range(2):
        for j in range(2):
            e = np.zeros((2, 2))
            e[i, j] = h
            fd = (local_cost(plan + e, u, x) - local_cost(plan - e, u, x)) / (2 * h)
            assert fd == pytest.approx(g[i, j], rel=1e-6, abs=1e-8)


def test_log_family_values():
    f = Logarithmic(np.array([[2.0]]))
    assert f.value(np.array([[np.e - 1]]))[0, 0] == pytest.approx(2.0)
    assert f.derivative(np.array([[1.0]]))[0, 0] == pytest.approx(1.0)
