import numpy as np
import pytest

from dcgridsim import policies, plant
from dcgridsim.plant import AidcState, PlanningAction
from dcgridsim.policies import (DemandStats, DenseLayer, FixedBufferPolicy,
                                HeuristicPolicy, ObsNorm, Observation,
                                PolicyWeights, WeightsFormatError,
                                action_to_request, build_observation,
                                load_weights, mlp_policy_eval, save_weights)
from dcgridsim.scenario import TraceProfile, synth_traces


def _obs(**kw):
    base = dict(e_bess_mwh=270.0, s_prev_1a=1.0, s_prev_1b=1.0, s_prev_2=0.5,
                remaining_1a=20.0, remaining_1b=20.0, urgency_1a=1.0,
                urgency_1b=1.0, p_acc_prev_mw=1000.0, kappa_prev_mw=0.0,
                price_aud_mwh=90.0, demand_mw=4600.0, inference_frac=0.5)
    base.update(kw)
    return Observation(**base)


# ---------------------------------------------------------------------------
# observation builder
# ---------------------------------------------------------------------------

def test_observation_initial_urgency_is_one(table1_aidc):
    state = AidcState.initial(table1_aidc, 96, 0.25)
    trace = synth_traces(TraceProfile(steps=96), 0)
    obs = build_observation(state, trace, 1, 96, 0.0, 0.0)
    assert obs.urgency_1a == pytest.approx(1.0)
    assert obs.urgency_1b == pytest.approx(1.0)
    assert len(obs.as_array()) == 13


def test_observation_urgency_behind_schedule(table1_aidc):
    state = AidcState.initial(table1_aidc, 96, 0.25)
    target = state.targets[0]
    state.delivered[0] = 0.4 * target    # 60% of the work remains at t=49
    trace = synth_traces(TraceProfile(steps=96), 0)
    obs = build_observation(state, trace, 49, 96, 0.0, 0.0)
    assert obs.urgency_1a == pytest.approx(0.6 * 96 / 48, abs=1e-12)   # 1.2


def test_observation_urgency_done_early(table1_aidc):
    state = AidcState.initial(table1_aidc, 96, 0.25)
    state.delivered[:2] = state.targets + 1.0
    trace = synth_traces(TraceProfile(steps=96), 0)
    obs = build_observation(state, trace, 50, 96, 0.0, 0.0)
    assert obs.urgency_1a == 0.0
    assert obs.remaining_1a == 0.0


def test_observation_feature_order_stable():
    arr = _obs().as_array()
    assert arr[0] == 270.0 and arr[10] == 90.0 and arr[12] == 0.5
    assert policies.FEATURE_ORDER[0] == "e_bess_mwh"
    assert policies.FEATURE_ORDER[-1] == "inference_frac"


# ---------------------------------------------------------------------------
# rule policies
# ---------------------------------------------------------------------------

def test_fixed_buffer_is_static():
    pol = FixedBufferPolicy()
    a1 = pol.act(_obs())
    a2 = pol.act(_obs(demand_mw=9999.0, e_bess_mwh=30.0))
    assert a1 == a2 == PlanningAction(0.85, 0.85, 0.85, 0.0, 0.0)


def test_heuristic_offpeak_charges(table1_aidc):
    pol = HeuristicPolicy(table1_aidc, DemandStats(p25=4000, p75=5200))
    act = pol.act(_obs(demand_mw=4500.0, e_bess_mwh=0.85 * 300.0, inference_frac=0.4))
    assert act == PlanningAction(1.0, 1.0, 0.4, 0.5, 0.0)


def test_heuristic_peak_sheds_and_discharges(table1_aidc):
    pol = HeuristicPolicy(table1_aidc, DemandStats(p25=4000, p75=5200))
    act = pol.act(_obs(demand_mw=5300.0, e_bess_mwh=0.9 * 300.0, inference_frac=0.4))
    assert act == PlanningAction(0.8, 0.2, 0.4, 0.0, 0.5)


def test_heuristic_urgency_bump(table1_aidc):
    pol = HeuristicPolicy(table1_aidc, DemandStats(p25=4000, p75=5200))
    act = pol.act(_obs(demand_mw=5300.0, e_bess_mwh=150.0, urgency_1b=1.2,
                       inference_frac=0.4))
    assert act.s_1b == pytest.approx(0.3)
    assert act.s_1a == pytest.approx(0.8)


def test_demand_stats_from_trace():
    trace = synth_traces(TraceProfile(steps=672), 3)
    stats = DemandStats.from_trace(trace)
    assert stats.p25 < stats.p75
    trailing = DemandStats.trailing(trace, 300, window=96)
    assert trailing.p25 <= trailing.p75


# ---------------------------------------------------------------------------
# neural evaluator and weights contract
# ---------------------------------------------------------------------------

def _norm():
    return ObsNorm(capacity_mw=1478.0, e_max_mwh=300.0, horizon_hours=24.0)


def _zero_weights(hidden=8):
    layers = (
        DenseLayer(hidden, 13, np.zeros((hidden, 13)), np.zeros(hidden), "relu"),
        DenseLayer(5, hidden, np.zeros((5, hidden)), np.zeros(5), "linear"),
    )
    return PolicyWeights(1, layers, "tanh01", policies.FEATURE_ORDER)


def test_mlp_zero_weights_centered_action():
    action = mlp_policy_eval(_zero_weights(), _obs(), _norm())
    assert action.as_array() == pytest.approx(np.full(5, 0.5), abs=1e-12)


def test_mlp_permutation_symmetry():
    rng = np.random.default_rng(9)
    w1 = rng.normal(size=(8, 13))
    layers = (DenseLayer(8, 13, w1, rng.normal(size=8), "relu"),
              DenseLayer(5, 8, rng.normal(size=(5, 8)), rng.normal(size=5), "linear"))
    weights = PolicyWeights(1, layers, "tanh01", policies.FEATURE_ORDER)
    obs = _obs()
    base = mlp_policy_eval(weights, obs, _norm()).as_array()
    # swap two features and the matching first-layer columns
    norm = _norm()
    vec = policies.normalize_observation(obs, norm)
    i, j = 1, 3
    vec2 = vec.copy()
    vec2[[i, j]] = vec2[[j, i]]
    w1_swapped = w1.copy()
    w1_swapped[:, [i, j]] = w1_swapped[:, [j, i]]
    z = vec2
    for layer in (DenseLayer(8, 13, w1_swapped, layers[0].b, "relu"), layers[1]):
        z = policies._ACTIVATIONS[layer.act](layer.w @ z + layer.b)
    swapped = (np.tanh(z) + 1.0) / 2.0
    assert swapped == pytest.approx(base, abs=1e-12)


def test_weights_round_trip(tmp_path):
    rng = np.random.default_rng(10)
    layers = (DenseLayer(16, 13, rng.normal(size=(16, 13)), rng.normal(size=16), "relu"),
              DenseLayer(5, 16, rng.normal(size=(5, 16)), rng.normal(size=5), "linear"))
    weights = PolicyWeights(1, layers, "tanh01", policies.FEATURE_ORDER)
    path = tmp_path / "w.json"
    save_weights(weights, path)
    loaded = load_weights(path)
    obs = _obs()
    a1 = mlp_policy_eval(weights, obs, _norm()).as_array()
    a2 = mlp_policy_eval(loaded, obs, _norm()).as_array()
    assert a2 == pytest.approx(a1, abs=1e-5)


def test_weights_validation_errors(tmp_path):
    rng = np.random.default_rng(11)
    bad_chain = PolicyWeights(1, (
        DenseLayer(8, 12, rng.normal(size=(8, 12)), np.zeros(8), "relu"),
        DenseLayer(5, 8, rng.normal(size=(5, 8)), np.zeros(5), "linear")),
        "tanh01", policies.FEATURE_ORDER)
    with pytest.raises(WeightsFormatError, match="expects 12 inputs"):
        bad_chain.validate()
    nonfinite = PolicyWeights(1, (
        DenseLayer(5, 13, np.full((5, 13), np.nan), np.zeros(5), "relu"),),
        "tanh01", policies.FEATURE_ORDER)
    with pytest.raises(WeightsFormatError, match="non-finite"):
        nonfinite.validate()
    garbled = tmp_path / "garbled.json"
    garbled.write_text('{"version": 1}')
    with pytest.raises(WeightsFormatError, match="malformed"):
        load_weights(garbled)


# ---------------------------------------------------------------------------
# request construction
# ---------------------------------------------------------------------------

def test_request_values_match_power_model(table1_aidc):
    full = action_to_request(PlanningAction(1, 1, 1, 0, 0), table1_aidc, 1.0)
    assert abs(full - 1268.0) < 1.0
    idle = action_to_request(PlanningAction(0, 0, 0, 0, 0), table1_aidc, 1.0)
    assert idle == pytest.approx(plant.idle_floor(table1_aidc), abs=1e-9)
    dis = action_to_request(PlanningAction(0, 0, 0, 0, 1), table1_aidc, 1.0)
    assert dis == pytest.approx(119.13, abs=0.01)


def test_request_monotonicity(table1_aidc):
    rng = np.random.default_rng(12)
    for _ in range(30):
        a = rng.uniform(0, 1, 5)
        d_inf = float(rng.uniform(0.2, 1.0))
        base = action_to_request(PlanningAction(*a), table1_aidc, d_inf)
        for k in (0, 1, 2, 3):
            bumped = a.copy()
            bumped[k] = min(1.0, bumped[k] + 0.1)
            up = action_to_request(PlanningAction(*bumped), table1_aidc, d_inf)
            assert up >= base - 1e-9
        dn = a.copy()
        dn[4] = min(1.0, dn[4] + 0.1)
        down = action_to_request(PlanningAction(*dn), table1_aidc, d_inf)
        assert down <= base + 1e-9


def test_request_clips_inference_to_demand(table1_aidc):
    hi = action_to_request(PlanningAction(0.5, 0.5, 1.0, 0, 0), table1_aidc, 0.2)
    lo = action_to_request(PlanningAction(0.5, 0.5, 0.2, 0, 0), table1_aidc, 0.2)
    assert hi == pytest.approx(lo, abs=1e-12)


def test_norm_for_scenario(table1_aidc):
    norm = ObsNorm.for_scenario(table1_aidc, 96, 0.25)
    assert norm.capacity_mw == pytest.approx(
        policies.connection_capacity(table1_aidc))
    vec = policies.normalize_observation(_obs(), norm)
    assert np.all(np.isfinite(vec)) and vec.shape == (13,)
