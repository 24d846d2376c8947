"""Planning-layer policies: observation building and action selection.

All policies are pure functions of (observation, configuration); the
neural evaluator runs exported weights deterministically, so a policy
trained elsewhere reproduces its actions here bit-for-bit given the same
weights file and normalization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .plant import AidcState, PlanningAction, facility_power
from .scenario import AidcConfig, ExogenousTrace

FEATURE_ORDER = (
    "e_bess_mwh",
    "s_prev_1a",
    "s_prev_1b",
    "s_prev_2",
    "remaining_1a",
    "remaining_1b",
    "urgency_1a",
    "urgency_1b",
    "p_acc_prev_mw",
    "kappa_prev_mw",
    "price_aud_mwh",
    "demand_mw",
    "inference_frac",
)

OBS_DIM = len(FEATURE_ORDER)   # 13
ACTION_DIM = 5


class WeightsFormatError(Exception):
    """Weights file violates the documented contract."""


@dataclass(frozen=True)
class Observation:
    """The 13 planning features in wire order (raw physical units)."""

    e_bess_mwh: float
    s_prev_1a: float
    s_prev_1b: float
    s_prev_2: float
    remaining_1a: float
    remaining_1b: float
    urgency_1a: float
    urgency_1b: float
    p_acc_prev_mw: float
    kappa_prev_mw: float
    price_aud_mwh: float
    demand_mw: float
    inference_frac: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in FEATURE_ORDER])


def connection_capacity(cfg: AidcConfig) -> float:
    """Nominal connection capacity: the largest request the plan can emit
    (all clusters at peak, battery charging at rating)."""
    return facility_power(cfg, np.ones(3), cfg.bess.p_max_mw, 0.0)


@dataclass(frozen=True)
class ObsNorm:
    """Per-feature divisors applied before a neural policy sees the
    observation. Part of the weights-file contract by convention: the
    trainer sees wire features already divided by these."""

    capacity_mw: float
    e_max_mwh: float
    horizon_hours: float
    price_scale: float = 300.0

    @classmethod
    def for_scenario(cls, cfg: AidcConfig, horizon_steps: int, dt_hours: float,
                     price_scale: float = 300.0) -> "ObsNorm":
        return cls(capacity_mw=connection_capacity(cfg),
                   e_max_mwh=cfg.bess.e_max_mwh,
                   horizon_hours=horizon_steps * dt_hours,
                   price_scale=price_scale)

    def divisors(self) -> np.ndarray:
        return np.array([
            self.e_max_mwh, 1.0, 1.0, 1.0,
            self.horizon_hours, self.horizon_hours, 1.0, 1.0,
            self.capacity_mw, self.capacity_mw,
            self.price_scale, self.capacity_mw, 1.0,
        ])


def normalize_observation(obs: Observation, norm: ObsNorm) -> np.ndarray:
    return obs.as_array() / norm.divisors()


def build_observation(state: AidcState, trace: ExogenousTrace, t: int,
                      horizon_steps: int, p_acc_prev: float,
                      kappa_prev: float) -> Observation:
    """Assemble the step-t features (t is 1-based).

    Urgency compares the remaining target against uniform delivery over
    the remaining steps: 1 means exactly on pace, above 1 behind.
    """
    if not 1 <= t <= horizon_steps:
        raise ValueError(f"step {t} outside horizon 1..{horizon_steps}")
    ti = t - 1
    remaining = state.remaining()
    urgency = np.zeros(2)
    for k in range(2):
        if state.targets[k] > 0:
            urgency[k] = remaining[k] * horizon_steps / (
                state.targets[k] * (horizon_steps - t + 1))
    return Observation(
        e_bess_mwh=state.e_bess,
        s_prev_1a=float(state.s_prev[0]),
        s_prev_1b=float(state.s_prev[1]),
        s_prev_2=float(state.s_prev[2]),
        remaining_1a=float(remaining[0]),
        remaining_1b=float(remaining[1]),
        urgency_1a=float(urgency[0]),
        urgency_1b=float(urgency[1]),
        p_acc_prev_mw=p_acc_prev,
        kappa_prev_mw=kappa_prev,
        price_aud_mwh=float(trace.price[ti]),
        demand_mw=float(trace.demand[ti]),
        inference_frac=float(trace.inference[ti]),
    )


def action_to_request(action: PlanningAction, cfg: AidcConfig, d_inf: float,
                      e_bess: float | None = None,
                      dt_hours: float = 0.25) -> float:
    """Power request implied by a planning action: the facility draw at
    the targeted throughputs (inference pre-clipped to demand) and the
    targeted battery exchange.

    When the battery state is supplied, planned charge/discharge are
    clipped to what the state of charge can actually absorb or deliver
    this step, keeping the request a truthful reflection of executable
    intent."""
    s = np.array([action.s_1a, action.s_1b, min(action.s_2, d_inf)])
    b = cfg.bess
    p_ch = action.phi_ch * b.p_max_mw
    p_dis = action.phi_dis * b.p_max_mw
    if e_bess is not None:
        p_ch = min(p_ch, max(0.0, (b.e_max_mwh - e_bess) / (b.eta_ch * dt_hours)))
        p_dis = min(p_dis, max(0.0, (e_bess - b.e_min_mwh) * b.eta_dis / dt_hours))
    p_req = facility_power(cfg, s, p_ch, p_dis)
    assert p_req >= 0.0
    return float(p_req)


# ---------------------------------------------------------------------------
# rule-based baselines
# ---------------------------------------------------------------------------

class FixedBufferPolicy:
    """Conservative static margin: constant throughput targets, idle battery."""

    def __init__(self, level: float = 0.85):
        self.level = level

    def act(self, obs: Observation) -> PlanningAction:
        return PlanningAction(self.level, self.level, self.level, 0.0, 0.0)


@dataclass(frozen=True)
class DemandStats:
    """Rolling or whole-trace demand percentiles for threshold policies."""

    p25: float
    p75: float

    @classmethod
    def from_trace(cls, trace: ExogenousTrace) -> "DemandStats":
        return cls(p25=float(np.percentile(trace.demand, 25)),
                   p75=float(np.percentile(trace.demand, 75)))

    @classmethod
    def trailing(cls, trace: ExogenousTrace, t: int, window: int = 192) -> "DemandStats":
        lo = max(0, t - window)
        seg = trace.demand[lo:max(t, 1)]
        return cls(p25=float(np.percentile(seg, 25)), p75=float(np.percentile(seg, 75)))


class HeuristicPolicy:
    """Demand-threshold rules: shed batch hard and frontier lightly during
    high-demand periods backed by the battery, run flat out and recharge
    off-peak, always track inference demand.

    Thresholds are configuration, not magic numbers: peak = demand at or
    above the 75th percentile; urgency floors rise when a training group
    falls more than 5% behind pace.
    """

    def __init__(self, cfg: AidcConfig, stats: DemandStats,
                 peak_frontier: float = 0.8, peak_batch: float = 0.2,
                 urgency_trigger: float = 1.05, urgency_bump: float = 0.1,
                 discharge_soc: float = 0.60, charge_soc: float = 0.90,
                 bess_fraction: float = 0.5):
        self.cfg = cfg
        self.stats = stats
        self.peak_frontier = peak_frontier
        self.peak_batch = peak_batch
        self.urgency_trigger = urgency_trigger
        self.urgency_bump = urgency_bump
        self.discharge_soc = discharge_soc
        self.charge_soc = charge_soc
        self.bess_fraction = bess_fraction

    def act(self, obs: Observation) -> PlanningAction:
        soc_frac = obs.e_bess_mwh / self.cfg.bess.e_max_mwh
        s_2 = obs.inference_frac
        if obs.demand_mw >= self.stats.p75:
            s_1a, s_1b = self.peak_frontier, self.peak_batch
            if obs.urgency_1a > self.urgency_trigger:
                s_1a = min(1.0, s_1a + self.urgency_bump)
            if obs.urgency_1b > self.urgency_trigger:
                s_1b = min(1.0, s_1b + self.urgency_bump)
            phi_dis = self.bess_fraction if soc_frac > self.discharge_soc else 0.0
            return PlanningAction(s_1a, s_1b, s_2, 0.0, phi_dis)
        phi_ch = self.bess_fraction if soc_frac < self.charge_soc else 0.0
        return PlanningAction(1.0, 1.0, s_2, phi_ch, 0.0)


# ---------------------------------------------------------------------------
# portable neural policy
# ---------------------------------------------------------------------------

_ACTIVATIONS = {
    "relu": lambda z: np.maximum(z, 0.0),
    "tanh": np.tanh,
    "linear": lambda z: z,
}


@dataclass(frozen=True)
class DenseLayer:
    rows: int            # output width
    cols: int            # input width
    w: np.ndarray        # rows x cols
    b: np.ndarray        # rows
    act: str


@dataclass(frozen=True)
class PolicyWeights:
    version: int
    layers: tuple[DenseLayer, ...]
    squash: str
    feature_order: tuple[str, ...]

    def validate(self) -> None:
        if self.squash != "tanh01":
            raise WeightsFormatError(f"unsupported squash {self.squash!r}")
        if tuple(self.feature_order) != FEATURE_ORDER:
            raise WeightsFormatError("feature order differs from the wire contract")
        width = OBS_DIM
        for i, layer in enumerate(self.layers):
            if layer.act not in _ACTIVATIONS:
                raise WeightsFormatError(f"layer {i}: unknown activation {layer.act!r}")
            if layer.cols != width:
                raise WeightsFormatError(
                    f"layer {i}: expects {layer.cols} inputs, previous width {width}")
            if layer.w.shape != (layer.rows, layer.cols) or layer.b.shape != (layer.rows,):
                raise WeightsFormatError(f"layer {i}: weight/bias shape mismatch")
            if not (np.all(np.isfinite(layer.w)) and np.all(np.isfinite(layer.b))):
                raise WeightsFormatError(f"layer {i}: non-finite parameters")
            width = layer.rows
        if width != ACTION_DIM:
            raise WeightsFormatError(f"network emits {width} outputs, expected {ACTION_DIM}")


def load_weights(path: str | Path) -> PolicyWeights:
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise WeightsFormatError(f"{path}: invalid JSON: {exc}") from exc
    try:
        layers = tuple(
            DenseLayer(
                rows=int(l["rows"]), cols=int(l["cols"]),
                w=np.array(l["w"], dtype=float).reshape(int(l["rows"]), int(l["cols"])),
                b=np.array(l["b"], dtype=float),
                act=str(l["act"]),
            )
            for l in raw["layers"]
        )
        weights = PolicyWeights(
            version=int(raw["version"]),
            layers=layers,
            squash=str(raw["squash"]),
            feature_order=tuple(raw["feature_order"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise WeightsFormatError(f"{path}: malformed weights file: {exc}") from exc
    weights.validate()
    return weights


def save_weights(weights: PolicyWeights, path: str | Path) -> None:
    weights.validate()
    obj = {
        "version": weights.version,
        "layers": [
            {"rows": l.rows, "cols": l.cols, "w": l.w.ravel().tolist(),
             "b": l.b.tolist(), "act": l.act}
            for l in weights.layers
        ],
        "squash": weights.squash,
        "feature_order": list(weights.feature_order),
    }
    Path(path).write_text(json.dumps(obj) + "\n")


def mlp_policy_eval(weights: PolicyWeights, obs: Observation, norm: ObsNorm) -> PlanningAction:
    """Deterministic forward pass; output means squashed into [0,1]^5."""
    z = normalize_observation(obs, norm)
    for layer in weights.layers:
        z = _ACTIVATIONS[layer.act](layer.w @ z + layer.b)
    if not np.all(np.isfinite(z)):
        raise WeightsFormatError("non-finite activation in forward pass")
    action = (np.tanh(z) + 1.0) / 2.0
    return PlanningAction.from_array(action)


class MlpPolicy:
    def __init__(self, weights: PolicyWeights, norm: ObsNorm):
        weights.validate()
        self.weights = weights
        self.norm = norm

    def act(self, obs: Observation) -> PlanningAction:
        return mlp_policy_eval(self.weights, obs, self.norm)
