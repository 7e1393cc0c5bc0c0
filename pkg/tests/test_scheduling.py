import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmwsched.channel import MeasurementVector
from mmwsched.scheduling import (
    CostVector,
    LinkCombination,
    QosRequirement,
    ScheduleResult,
    combination_index,
    consecutive_cost,
    enumerate_combinations,
    execute_policy,
    genie_solve,
    greedy_multi_x,
    label_batch,
    label_sample,
    min_multi_x,
)

from oracles import consecutive_brute_force, ip_brute_force, label_brute_force

C3 = CostVector.default(3)


@st.composite
def instances(draw, max_aps=2, max_k=4, max_d=4):
    n = draw(st.integers(1, max_aps))
    K = draw(st.integers(1, max_k))
    D = draw(st.integers(0, max_d))
    g = np.array(draw(st.lists(st.integers(0, 1), min_size=(n + 1) * K, max_size=(n + 1) * K))).reshape(n + 1, K)
    ap_costs = draw(st.lists(st.integers(1, 5), min_size=n, max_size=n))
    c0 = draw(st.integers(max(ap_costs) + 1, 20))
    return g, QosRequirement(D, K), CostVector((float(c0), *map(float, ap_costs)))


# --------------------------------------------------------------------------
# combination space
# --------------------------------------------------------------------------


def test_enumerate_four_links():
    combos = enumerate_combinations(4)
    assert len(combos) == 16
    assert len({c.links for c in combos}) == 16
    assert combos[0].links == () and combos[15].links == (0, 1, 2, 3)


def test_enumerate_one_link():
    assert [c.links for c in enumerate_combinations(1)] == [(), (0,)]


def test_index_of_zero_two():
    assert combination_index([0, 2]) == 5
    assert LinkCombination.of([0, 2], 4).index == 5


@pytest.mark.parametrize("n", [0, 17])
def test_enumerate_cap(n):
    with pytest.raises(ValueError):
        enumerate_combinations(n)


def test_cost_vector_validation():
    with pytest.raises(ValueError):
        CostVector((1.0, 1.0))
    with pytest.raises(ValueError):
        CostVector((10.0, 0.5))
    assert CostVector.default(3).costs == (100.0, 1.0, 1.0, 1.0)


# --------------------------------------------------------------------------
# genie
# --------------------------------------------------------------------------


def test_genie_small_example():
    r = genie_solve(np.array([[1, 1], [0, 1]]), QosRequirement(1, 2), CostVector((100.0, 1.0)))
    assert r.feasible and r.combination == 0b10 and r.cost == 1
    assert r.schedule == [[], [1]]
    assert ip_brute_force([[1, 1], [0, 1]], 1, [100, 1]) == (True, 1.0)


def test_genie_zero_demand():
    r = genie_solve(np.ones((4, 5)), QosRequirement(0, 5), C3)
    assert r.feasible and r.combination == 0 and r.cost == 0


def test_genie_all_zero_is_infeasible():
    assert not genie_solve(np.zeros((4, 5)), QosRequirement(1, 5), C3).feasible


@settings(max_examples=300)
@given(instances())
def test_genie_matches_brute_force(inst):
    g, qos, costs = inst
    r = genie_solve(g, qos, costs)
    feasible, cost = ip_brute_force(g, qos.D, costs.costs)
    assert r.feasible == feasible
    if feasible:
        assert r.cost == pytest.approx(cost)
        # the returned schedule is itself a feasible IP assignment of that cost
        used = [(i, k) for k, slot in enumerate(r.schedule) for i in slot]
        assert sum(g[i, k] for i, k in used) >= qos.D
        assert sum(costs.costs[i] for i, _ in used) == pytest.approx(r.cost)
        assert all(r.combination >> i & 1 for i, _ in used)
        assert r.failures == 0


@settings(max_examples=200)
@given(instances())
def test_genie_never_costs_more_than_consecutive(inst):
    g, qos, costs = inst
    gen = genie_solve(g, qos, costs)
    for j in range(1 << len(g)):
        r = consecutive_cost(j, g, qos, costs)
        if r.feasible:
            assert gen.feasible and gen.cost <= r.cost + 1e-9


@settings(max_examples=200)
@given(instances(), st.integers(2, 7))
def test_genie_argmin_invariant_to_cost_scaling(inst, scale):
    g, qos, costs = inst
    a = genie_solve(g, qos, costs)
    b = genie_solve(g, qos, CostVector(tuple(scale * c for c in costs.costs)))
    assert (a.combination, a.schedule) == (b.combination, b.schedule)


# --------------------------------------------------------------------------
# consecutive transmission, labels, baselines
# --------------------------------------------------------------------------


def test_consecutive_two_links():
    g = np.ones((3, 3), dtype=int)
    r = consecutive_cost(LinkCombination.of([1, 2], 3), g, QosRequirement(4, 3), CostVector((100.0, 1.0, 1.0)))
    assert (r.stop_slot, r.cost, r.failures, r.successes) == (2, 4, 0, 4)


def test_consecutive_empty_set():
    r = consecutive_cost(0, np.ones((2, 3)), QosRequirement(1, 3), CostVector((100.0, 1.0)))
    assert not r.feasible and r.cost == 0


def test_consecutive_with_failure():
    g = np.array([[0, 0, 0], [0, 1, 1]])
    r = consecutive_cost(0b10, g, QosRequirement(2, 3), CostVector((100.0, 1.0)))
    assert (r.stop_slot, r.cost, r.failures) == (3, 3, 1)


def test_success_count_clamped_in_last_slot():
    r = consecutive_cost(0b1110, np.ones((4, 5)), QosRequirement(4, 5), C3)
    assert r.successes == 4 and r.successful_transmissions == 6 and r.transmissions == 6 and r.cost == 6


def test_execute_policy_low_band_only():
    r = execute_policy(LinkCombination.of([0], 2), np.array([[1, 1, 1], [0, 0, 0]]), QosRequirement(2, 3),
                       CostVector((100.0, 1.0)))
    assert r.cost == 200 and r.lb_transmissions == 2


def test_label_all_ones_picks_two_mmwave_links():
    label = label_sample(np.ones((4, 50)), QosRequirement(100, 50), C3)
    assert label.index == 0b0110 and label.cost == 100


def test_label_all_zero_and_zero_demand():
    assert label_sample(np.zeros((4, 50)), QosRequirement(100, 50), C3).index == 0
    lab = label_sample(np.ones((4, 50)), QosRequirement(0, 50), C3)
    assert lab.index == 0 and lab.cost == 0


@settings(max_examples=300)
@given(instances())
def test_label_matches_brute_force(inst):
    g, qos, costs = inst
    assert label_sample(g, qos, costs).index == label_brute_force(g, qos.D, costs.costs)


@settings(max_examples=100)
@given(st.lists(instances(max_aps=2, max_k=4), min_size=1, max_size=6))
def test_label_batch_matches_single(insts):
    L, K = insts[0][0].shape
    same = [i for i in insts if i[0].shape == (L, K) and len(i[2]) == L]
    g = np.stack([i[0] for i in same])
    qos, costs = same[0][1], same[0][2]
    assert label_batch(g, qos, costs).tolist() == [label_sample(x, qos, costs).index for x in g]


@settings(max_examples=200)
@given(instances())
def test_consecutive_matches_slot_simulation(inst):
    g, qos, costs = inst
    for j in range(1 << len(g)):
        r = consecutive_cost(j, g, qos, costs)
        feasible, cost = consecutive_brute_force(g, qos.D, costs.costs, j)
        assert (r.feasible, r.cost) == (feasible, pytest.approx(cost))
        assert r.successes <= qos.D
        assert r.failures == r.transmissions - r.successful_transmissions
        assert all(len(s) == len(LinkCombination(j, len(g))) for s in r.schedule)


@settings(max_examples=200)
@given(instances())
def test_all_links_feasible_whenever_any_is(inst):
    g, qos, costs = inst
    any_ok = any(consecutive_cost(j, g, qos, costs).feasible for j in range(1 << len(g)))
    assert greedy_multi_x(g, qos, costs).feasible == any_ok


def test_greedy_examples():
    r = greedy_multi_x(np.ones((4, 50)), QosRequirement(4, 50), C3)
    assert (r.stop_slot, r.cost, r.failures) == (1, 103, 0)
    r = greedy_multi_x(np.zeros((4, 50)), QosRequirement(1, 50), C3)
    assert not r.feasible and r.cost == 103 * 50 and r.failures == r.transmissions == 200
    assert greedy_multi_x(np.ones((4, 50)), QosRequirement(0, 50), C3).cost == 0


def _mv(ap_best, lb):
    snr = np.full((len(ap_best), 19), -40.0)
    snr[:, 3] = ap_best
    return MeasurementVector(snr, lb, np.zeros(2), 0)


def test_min_multi_x_examples():
    mv = _mv([25.0, 5.0, 15.0], 12.0)
    assert min_multi_x(mv, QosRequirement(100, 50)).links == (1, 3)
    assert min_multi_x(mv, QosRequirement(1, 50)).links == (1,)
    assert len(min_multi_x(mv, QosRequirement(1000, 50))) == 4


def test_min_multi_x_ties_prefer_lower_index():
    assert min_multi_x(_mv([20.0, 20.0, 20.0], 20.0), QosRequirement(100, 50)).links == (0, 1)


@settings(max_examples=100)
@given(st.lists(st.floats(-40, 60), min_size=4, max_size=4), st.integers(0, 300), st.integers(1, 60))
def test_min_multi_x_size(scores, D, K):
    mv = _mv(scores[1:], scores[0])
    assert len(min_multi_x(mv, QosRequirement(D, K))) == min(-(-D // K), 4)


def test_schedule_result_json_round_trip():
    r = genie_solve(np.array([[1, 1], [1, 0]]), QosRequirement(2, 2), CostVector((100.0, 1.0)))
    back = ScheduleResult.from_json(r.to_json())
    assert back == r
    assert json.loads(r.to_json())["cost"] == r.cost


def test_mismatched_costs_rejected():
    with pytest.raises(ValueError):
        genie_solve(np.ones((3, 4)), QosRequirement(1, 4), C3)
