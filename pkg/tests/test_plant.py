import numpy as np
import pytest

from dcgridsim import plant
from dcgridsim.plant import AidcState, PlanningAction
from .oracles import execution_objective_grid


def test_it_power_endpoints(table1_aidc):
    c1a = table1_aidc.cluster("1a")
    assert plant.it_power(c1a, 0.0) == pytest.approx(165.0)
    assert plant.it_power(c1a, 1.0) == pytest.approx(550.0)
    assert plant.it_power(c1a, 0.5) == pytest.approx(357.5)
    with pytest.raises(ValueError):
        plant.it_power(c1a, 1.2)


def test_facility_power_values(table1_aidc):
    full = plant.facility_power(table1_aidc, np.ones(3), 0.0, 0.0)
    assert full == pytest.approx((1 / 0.95 + 0.10) * 1100.0, abs=1e-9)
    assert abs(full - 1268.0) < 1.0
    floor = plant.idle_floor(table1_aidc)
    assert floor == pytest.approx((1 / 0.95 + 0.10) * 286.0, abs=0.01)
    deep_dis = plant.facility_power(table1_aidc, np.zeros(3), 0.0, 200.0)
    assert deep_dis == pytest.approx(floor - 200.0 / 0.95, abs=1e-9)
    assert deep_dis == pytest.approx(119.13, abs=0.01)


def test_soc_step_values(table1_aidc):
    b = table1_aidc.bess
    assert plant.soc_step(270.0, 100.0, 0.0, 0.25, b) == pytest.approx(293.75)
    assert plant.soc_step(270.0, 0.0, 0.0, 0.25, b) == 270.0
    assert plant.soc_step(270.0, 0.0, 125.0, 0.25, b) == pytest.approx(237.105, abs=1e-3)
    with pytest.raises(plant.PlantError):
        plant.soc_step(299.0, 200.0, 0.0, 0.25, b)


def _state(cfg, e_bess=270.0, horizon=96):
    s = AidcState.initial(cfg, horizon, 0.25)
    s.e_bess = e_bess
    return s


def test_execute_exact_tracking(table1_aidc):
    from dcgridsim.policies import action_to_request
    action = PlanningAction(0.9, 0.8, 0.4, 0.0, 0.0)
    p_req = action_to_request(action, table1_aidc, d_inf=0.4)
    res = plant.execute_step(action, p_req, _state(table1_aidc), 0.4,
                             table1_aidc, 0.25)
    assert np.allclose(res.s, [0.9, 0.8, 0.4], atol=1e-9)
    assert np.all(res.u <= 1e-9)
    assert abs(res.balance_residual) <= 1e-6


def test_execute_discharge_covers_curtailment(table1_aidc):
    from dcgridsim.policies import action_to_request
    action = PlanningAction(0.9, 0.8, 0.4, 0.0, 0.0)
    p_req = action_to_request(action, table1_aidc, 0.4)
    res = plant.execute_step(action, p_req - 50.0, _state(table1_aidc), 0.4,
                             table1_aidc, 0.25)
    assert res.p_dis == pytest.approx(47.5, abs=1e-6)   # 50 MW x ipcs efficiency
    assert np.all(res.u <= 1e-9)
    assert abs(res.balance_residual) <= 1e-6
    assert res.p_ch == 0.0


def test_execute_charge_reduction_before_throughput(table1_aidc):
    from dcgridsim.policies import action_to_request
    action = PlanningAction(0.9, 0.8, 0.4, 0.5, 0.0)   # plans 100 MW charge
    p_req = action_to_request(action, table1_aidc, 0.4)
    res = plant.execute_step(action, p_req - 50.0, _state(table1_aidc), 0.4,
                             table1_aidc, 0.25)
    assert res.p_ch == pytest.approx(100.0 - 47.5, abs=1e-6)
    assert res.p_dis == 0.0
    assert np.all(res.u <= 1e-9)


def test_execute_below_idle_floor_rejected(table1_aidc):
    with pytest.raises(plant.PlantError, match="idle floor"):
        plant.execute_step(PlanningAction(0, 0, 0, 0, 0), 100.0,
                           _state(table1_aidc), 0.5, table1_aidc, 0.25)


def test_execute_inference_target_clipped(table1_aidc):
    from dcgridsim.policies import action_to_request
    action = PlanningAction(0.9, 0.8, 0.85, 0.0, 0.0)
    p_req = action_to_request(action, table1_aidc, d_inf=0.3)
    res = plant.execute_step(action, p_req, _state(table1_aidc), 0.3,
                             table1_aidc, 0.25)
    assert res.s[2] <= 0.3 + 1e-9
    assert res.r_2 == pytest.approx(0.0, abs=1e-9)


def test_mode_exclusivity_random(table1_aidc):
    rng = np.random.default_rng(6)
    from dcgridsim.policies import action_to_request
    for _ in range(50):
        a = PlanningAction(*rng.uniform(0, 1, 5))
        d_inf = float(rng.uniform(0, 1))
        e = float(rng.uniform(30, 300))
        p_req = action_to_request(a, table1_aidc, d_inf)
        p_acc = max(plant.idle_floor(table1_aidc),
                    p_req - rng.uniform(0, 200))
        res = plant.execute_step(a, p_acc, _state(table1_aidc, e), d_inf,
                                 table1_aidc, 0.25)
        assert res.p_ch * res.p_dis == 0.0
        assert abs(res.balance_residual) <= 1e-6


def test_execution_matches_grid_oracle(table1_aidc):
    rng = np.random.default_rng(7)
    for _ in range(25):
        a = PlanningAction(*rng.uniform(0, 1, 5))
        d_inf = float(rng.uniform(0, 1))
        e = float(rng.uniform(30, 300))
        p_req_like = plant.facility_power(
            table1_aidc, np.array([a.s_1a, a.s_1b, min(a.s_2, d_inf)]),
            a.phi_ch * 200.0, a.phi_dis * 200.0)
        p_acc = max(plant.idle_floor(table1_aidc), p_req_like - rng.uniform(0, 250))
        res = plant.execute_step(a, p_acc, _state(table1_aidc, e), d_inf,
                                 table1_aidc, 0.25)
        oracle = execution_objective_grid(a, p_acc, e, d_inf, table1_aidc, 0.25)
        assert res.objective <= oracle + 1e-3
        assert res.objective >= oracle - 1e-3


def test_curtailment_pain_monotone_without_planned_charge(table1_aidc):
    # with no planned charging, shrinking the budget can only increase the
    # optimal execution objective (planned charging breaks this globally:
    # charge deferral reduces cycling cost)
    action = PlanningAction(0.95, 0.9, 0.5, 0.0, 0.0)
    from dcgridsim.policies import action_to_request
    p_req = action_to_request(action, table1_aidc, 0.5)
    floor = plant.idle_floor(table1_aidc)
    prev = -1.0
    for p_acc in np.linspace(p_req, floor, 25):
        res = plant.execute_step(action, float(p_acc), _state(table1_aidc),
                                 0.5, table1_aidc, 0.25)
        if prev >= 0:
            assert res.objective >= prev - 1e-9
        prev = res.objective


def test_soc_chain_stays_in_bounds(table1_aidc):
    rng = np.random.default_rng(8)
    state = _state(table1_aidc, 270.0)
    from dcgridsim.policies import action_to_request
    for _ in range(60):
        a = PlanningAction(*rng.uniform(0, 1, 5))
        d_inf = float(rng.uniform(0, 1))
        p_req = action_to_request(a, table1_aidc, d_inf)
        p_acc = max(plant.idle_floor(table1_aidc), p_req - rng.uniform(0, 150))
        res = plant.execute_step(a, p_acc, state, d_inf, table1_aidc, 0.25)
        state.e_bess = plant.soc_step(state.e_bess, res.p_ch, res.p_dis, 0.25,
                                      table1_aidc.bess)
        assert 30.0 - 1e-6 <= state.e_bess <= 300.0 + 1e-6


def test_feasibility_check_flags(table1_aidc):
    from dcgridsim.policies import action_to_request
    action = PlanningAction(0.9, 0.8, 0.4, 0.0, 0.0)
    p_req = action_to_request(action, table1_aidc, 0.4)
    state = _state(table1_aidc)
    res = plant.execute_step(action, p_req, state, 0.4, table1_aidc, 0.25)
    assert plant.feasibility_check(res, p_req, state, 0.4, table1_aidc, 0.25).ok

    res.s[2] = 0.7
    rep = plant.feasibility_check(res, p_req, state, 0.5, table1_aidc, 0.25)
    item = next(i for i in rep.items if i.name == "inference_demand_cap")
    assert not item.passed
    assert item.slack == pytest.approx(-0.2, abs=1e-9)

    res2 = plant.execute_step(action, p_req, state, 0.4, table1_aidc, 0.25)
    res2.p_ch, res2.p_dis, res2.beta = 50.0, 50.0, 1
    rep2 = plant.feasibility_check(res2, p_req, state, 0.4, table1_aidc, 0.25)
    bad = {i.name for i in rep2.failed()}
    assert "discharge_upper" in bad


def test_terminal_shortfall(table1_aidc):
    s = AidcState.initial(table1_aidc, 96, 0.25)
    s.delivered = np.array([s.targets[0], s.targets[1], 0.0])
    assert plant.terminal_shortfall(s) == {"1a": 0.0, "1b": 0.0}
    # delivered 89.4% of the horizon against a 94% target
    s2 = AidcState.initial(table1_aidc, 96, 0.25)
    s2.delivered = np.array([0.894 * 24.0, s2.targets[1], 0.0])
    short = plant.terminal_shortfall(s2)
    assert short["1a"] == pytest.approx(0.046 * 96 * 0.25, abs=1e-9)
    # degenerate zero-length horizon
    s3 = AidcState.initial(table1_aidc, 0, 0.25)
    assert plant.terminal_shortfall(s3) == {"1a": 0.0, "1b": 0.0}
