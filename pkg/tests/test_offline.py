import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pevcharge.errors import Infeasible, TooLarge
from pevcharge.model import FleetArrays
from pevcharge.offline import (
    SolverSettings,
    VehicleTube,
    brute_force_schedule_oracle,
    max_weight_oracle,
    project_tube,
    reachable_check,
    solve_day,
    solve_static,
    solve_static_forecast,
    solve_static_optimal,
    vehicle_tube,
)
from pevcharge.schedule import schedule_violations

from conftest import manual_scenario, unit_spec


def cvx_project(z, tube):
    x = cp.Variable(z.size)
    c = cp.cumsum(x)
    prob = cp.Problem(cp.Minimize(cp.sum_squares(x - z)),
                      [x >= 0, x <= tube.ub, c >= tube.lo, c <= tube.hi])
    prob.solve(solver=cp.CLARABEL)
    return x.value


@st.composite
def tubes(draw):
    t = draw(st.integers(2, 10))
    ub = np.array(draw(st.lists(st.sampled_from([0.0, 0.5, 1.0, 1.92]), min_size=t, max_size=t)))
    cons = np.array(draw(st.lists(st.floats(0, 1.5), min_size=t, max_size=t)))
    q0 = draw(st.floats(0, 4))
    cap = draw(st.floats(4, 12))
    ub[0] = max(ub[0], 0.5)
    tube = vehicle_tube(ub, cons, q0, cap, 1.0, 1.0)
    return tube, np.array(draw(st.lists(st.floats(-3, 3), min_size=t, max_size=t)))


@settings(max_examples=60, deadline=None)
@given(tubes())
def test_projection_matches_convex_solver(case):
    tube, z = case
    if reachable_check(tube) is not None:
        with pytest.raises(Infeasible):
            project_tube(z, tube)
        return
    x = project_tube(z, tube)
    ref = cvx_project(z, tube)
    c = np.cumsum(x)
    assert np.all(x >= -1e-9) and np.all(x <= tube.ub + 1e-9)
    assert np.all(c >= tube.lo - 1e-7) and np.all(c <= tube.hi + 1e-7)
    assert np.sum((x - z) ** 2) <= np.sum((ref - z) ** 2) + 1e-6


def test_two_slot_valley_fill():
    tube = VehicleTube(np.array([1.0, 1.0]), np.array([0.0, 1.0]), np.array([1.0, 1.0]))
    res = solve_day(np.array([0.0, 2.0]), [tube])
    assert res.powers[0] == pytest.approx([1.0, 0.0], abs=1e-9)
    assert res.objective == pytest.approx(2.5)


def _three_slot():
    spec = unit_spec(3, p_max=2.0, capacity=10.0)
    return manual_scenario([5.0, 0.0, 2.0], [spec], [[False, True, True]],
                           [[1.0, 0.0, 0.0]], [0.0])


def test_three_slot_schedule_against_brute_force():
    sc = _three_slot()
    sched = solve_static_optimal(sc)
    oracle = brute_force_schedule_oracle(sc, step=0.05)
    assert sched.powers[0] == pytest.approx([0.0, 1.0, 0.0], abs=1e-8)
    assert oracle.info["objective"] == pytest.approx(10.0)
    assert np.mean((sc.net_load.values + sched.aggregate) ** 2) == pytest.approx(10.0)


def test_zero_energy_means_no_charging(small_fleet):
    sc = manual_scenario(np.arange(8.0), [unit_spec(8)] * 2, np.ones((2, 8), bool),
                         np.zeros((2, 8)), [3.0, 0.0])
    assert np.all(solve_static_optimal(sc).powers == 0)


def test_flat_valley_is_filled_exactly():
    net = np.array([4.0, 1.0, 2.0, 4.0])
    specs = [unit_spec(4, p_max=3.0, capacity=20.0)] * 2
    cons = np.zeros((2, 4))
    cons[:, 0] = [2.5, 2.5]
    avail = np.array([[False, True, True, True]] * 2)
    sc = manual_scenario(net, specs, avail, cons, [0.0, 0.0])
    total = net + solve_static_optimal(sc).aggregate
    assert total[1:] == pytest.approx([4.0, 4.0, 4.0], abs=1e-8)


def test_constant_forecast_shift_gives_same_plan(small_fleet):
    a = solve_static(small_fleet, small_fleet.net_load.values)
    b = solve_static_forecast(small_fleet, small_fleet.net_load.values + 37.0)
    assert np.allclose(a.powers, b.powers, atol=1e-6)


def test_exact_forecast_matches_static_optimal(small_fleet):
    a = solve_static_optimal(small_fleet)
    b = solve_static_forecast(small_fleet, small_fleet.net_load)
    assert np.allclose(a.powers, b.powers, atol=1e-12)
    assert b.provenance == "static-forecast"


def test_descent_and_feasibility(small_fleet):
    sched = solve_static_optimal(small_fleet)
    assert schedule_violations(sched, small_fleet, tol=1e-7) == []
    assert sched.info["converged"]
    sl = small_fleet.day_slice(0)
    from pevcharge.offline import day_tubes
    res = solve_day(small_fleet.net_load.values[sl], day_tubes(small_fleet, 0))
    # The first entry is the empty starting point, not a feasible schedule.
    h = np.array(res.history[1:])
    assert np.all(np.diff(h) <= 1e-9 * h[:-1])


def test_matches_convex_solver_on_whole_day(small_fleet):
    sc = small_fleet
    sl = sc.day_slice(0)
    from pevcharge.offline import day_tubes
    tl = day_tubes(sc, 0)
    s = sc.net_load.values[sl]
    x = cp.Variable((sc.n_vehicles, s.size))
    cons = [x >= 0]
    for i, t in enumerate(tl):
        c = cp.cumsum(x[i])
        cons += [x[i] <= t.ub, c >= t.lo, c <= t.hi]
    prob = cp.Problem(cp.Minimize(cp.sum_squares(s + cp.sum(x, axis=0)) / s.size), cons)
    prob.solve(solver=cp.CLARABEL)
    ours = solve_day(s, tl).objective
    assert ours <= prob.value * (1 + 1e-6)


def test_infeasible_day_names_vehicle():
    spec = unit_spec(4, p_max=0.5, capacity=10.0)
    cons = np.zeros((1, 4))
    cons[0, 0] = 3.0
    sc = manual_scenario(np.ones(4), [spec], [[False, True, True, True]], cons, [0.0])
    with pytest.raises(Infeasible) as err:
        solve_static_optimal(sc)
    assert err.value.vehicle == 0 and err.value.day == 0


def test_stall_can_raise():
    from pevcharge.errors import NotConverged
    sc = manual_scenario([3.0, 0.0, 1.0, 2.0], [unit_spec(4, 2.0, 20.0)] * 3, np.array([[True, True, True, False]] * 3),
                         np.array([[0, 0, 0, 2.0]] * 3), [2.0] * 3)
    with pytest.raises(NotConverged):
        solve_static_optimal(sc, SolverSettings(max_iters=1, raise_on_stall=True))


def test_oracle_size_limits():
    sc = manual_scenario(np.zeros(5), [unit_spec(5)], np.ones((1, 5), bool), np.zeros((1, 5)), [0.0])
    with pytest.raises(TooLarge):
        brute_force_schedule_oracle(sc)
    fleet = FleetArrays(np.ones(9), np.ones(9), np.ones(9), np.zeros(9), np.zeros(9))
    with pytest.raises(TooLarge):
        max_weight_oracle(np.ones(9), fleet, np.ones(9, bool), 0.0, 1.0, 1.0)


def test_max_weight_oracle_single_vehicle():
    fleet = FleetArrays(np.array([100.0]), np.array([1.0]), np.array([1.0]), np.zeros(1), np.zeros(1))
    p, val = max_weight_oracle([10.0], fleet, [True], 0.0, 0.5, 1.0)
    assert p[0] == pytest.approx(1.0) and val == pytest.approx(9.5)
    # Interior optimum: weight 1, beta 1, so P = 0.5.
    p, val = max_weight_oracle([1.0], FleetArrays(np.array([100.0]), np.array([5.0]), np.ones(1),
                                                    np.zeros(1), np.zeros(1)), [True], 0.0, 1.0, 1.0)
    assert p[0] == pytest.approx(0.5, abs=1e-6) and val == pytest.approx(0.25)
