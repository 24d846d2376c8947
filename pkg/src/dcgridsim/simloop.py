"""Closed-loop engine: observe, request, accept, execute, reward.

EpisodeEngine advances one protocol step at a time so the same machinery
serves batch simulation, the sweep driver, and the environment server.
Episodes are strictly sequential (state causality); distinct episodes
over the same scenario share all precomputed immutable data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import plant, policies, tso
from .plant import AidcState, ExecutionResult, PlanningAction, PlantError
from .scenario import Scenario
from .tso import AcceptanceOutcome, GridInfeasibleError


@dataclass
class StepRecord:
    t: int
    obs: policies.Observation
    action: PlanningAction
    p_req: float
    p_acc: float
    kappa: float
    mechanism: str
    execution: ExecutionResult
    reward: float
    reward_components: dict[str, float]
    e_bess_after: float
    delivered_after: np.ndarray
    dispatch_cost: float
    max_line_utilization: float


@dataclass
class EpisodeRecord:
    scenario: str
    steps: list[StepRecord]
    horizon: int
    dt_hours: float
    targets: np.ndarray
    delivered: np.ndarray = field(default_factory=lambda: np.zeros(3))
    shortfall: dict[str, float] = field(default_factory=dict)
    terminal_soc_deviation_mwh: float = 0.0
    aborted: bool = False
    abort_reason: str = ""

    @property
    def complete(self) -> bool:
        return not self.aborted and len(self.steps) == self.horizon


def step_reward(state: AidcState, execution: ExecutionResult, kappa: float,
                cfg, t: int, horizon: int, dt_hours: float):
    """Per-step reward and its three components. The workload term uses
    the shortfall against a uniform delivery schedule through step t;
    delivered work must already include step t."""
    shortfall = np.zeros(2)
    for k in range(2):
        if state.targets[k] > 0:
            pace = (t / horizon) * state.targets[k]
            shortfall[k] = max(0.0, pace - state.delivered[k]) / state.targets[k]
    workload = -cfg.alpha_w * (cfg.m_1a * shortfall[0] + cfg.m_1b * shortfall[1])
    rejection = -cfg.alpha_rej * execution.r_2 * dt_hours
    curtail = -cfg.alpha_kappa * kappa
    components = {"workload": workload, "rejection": rejection, "curtailment": curtail}
    return workload + rejection + curtail, components


class EpisodeEngine:
    """One episode over a scenario window, advanced step by step.

    Heavy precomputation (PTDF, baseline dispatch, protection terms) runs
    once in the constructor and is reusable across episodes via
    `shared_from`."""

    def __init__(self, scenario: Scenario, window_start: int = 0,
                 episode_steps: int | None = None, _shared=None):
        self.scenario = scenario
        steps = episode_steps or scenario.trace.steps
        self.trace = scenario.trace.window(window_start, steps)
        self.horizon = steps
        if _shared is not None:
            self.case, self.ptdf, self.baseline, self.protection = _shared
        else:
            self.case = scenario.effective_case()
            self.ptdf = tso.compute_ptdf(self.case)
            self.baseline = tso.solve_baseline_dispatch(self.case, self.trace)
            self.protection = tso.protection_terms(self.ptdf, self.trace,
                                                   scenario.tso, self.case)
        self.reset()

    def shared_from(self, window_start: int = 0, episode_steps: int | None = None):
        """New engine over the same window reusing all precomputation."""
        if window_start != 0 or (episode_steps or self.scenario.trace.steps) != self.horizon:
            return EpisodeEngine(self.scenario, window_start, episode_steps)
        return EpisodeEngine(self.scenario, 0, self.horizon,
                             _shared=(self.case, self.ptdf, self.baseline, self.protection))

    @classmethod
    def with_retuned_protection(cls, scenario: Scenario, base: "EpisodeEngine"
                                ) -> "EpisodeEngine":
        """Engine for a robustness variant of base's scenario: network,
        baseline and window are shared, only the protection terms move."""
        eng = cls.__new__(cls)
        eng.scenario = scenario
        eng.trace = base.trace
        eng.horizon = base.horizon
        eng.case = base.case
        eng.ptdf = base.ptdf
        eng.baseline = base.baseline
        eng.protection = tso.protection_terms(base.ptdf, base.trace,
                                              scenario.tso, base.case)
        eng.reset()
        return eng

    def reset(self) -> policies.Observation:
        self.t = 1
        self.done = False
        self.aidc = AidcState.initial(self.scenario.aidc, self.horizon,
                                      self.trace.dt_hours)
        self.tso_state = tso.TsoState.initial(self.baseline)
        self.p_acc_prev = 0.0
        self.kappa_prev = 0.0
        self.record = EpisodeRecord(
            scenario=self.scenario.name, steps=[], horizon=self.horizon,
            dt_hours=self.trace.dt_hours, targets=self.aidc.targets.copy())
        return self._observation()

    def _observation(self) -> policies.Observation:
        t = min(self.t, self.horizon)
        return policies.build_observation(self.aidc, self.trace, t, self.horizon,
                                          self.p_acc_prev, self.kappa_prev)

    def step(self, action: PlanningAction):
        """Run one request-acceptance-execution round. Returns
        (next_obs, reward, done, info, record). Raises GridInfeasibleError
        after marking the episode aborted."""
        if self.done:
            raise RuntimeError("episode is finished; call reset()")
        t = self.t
        obs = self._observation()
        cfg = self.scenario.aidc
        d_inf = float(self.trace.inference[t - 1])
        p_req = policies.action_to_request(action, cfg, d_inf,
                                           e_bess=self.aidc.e_bess,
                                           dt_hours=self.trace.dt_hours)
        try:
            outcome: AcceptanceOutcome = tso.robust_acceptance_step(
                p_req, t, self.baseline, self.protection, self.tso_state,
                self.case, self.scenario.tso, self.trace, ptdf=self.ptdf)
            execution = plant.execute_step(action, outcome.p_acc, self.aidc,
                                           d_inf, cfg, self.trace.dt_hours)
        except (GridInfeasibleError, PlantError) as exc:
            self.record.aborted = True
            self.record.abort_reason = str(exc)
            self.done = True
            self._finalize()
            raise
        self.aidc.e_bess = plant.soc_step(self.aidc.e_bess, execution.p_ch,
                                          execution.p_dis, self.trace.dt_hours,
                                          cfg.bess)
        self.aidc.delivered = self.aidc.delivered + execution.s * self.trace.dt_hours
        self.aidc.s_prev = execution.s.copy()
        reward, components = step_reward(self.aidc, execution, outcome.kappa,
                                         cfg, t, self.horizon, self.trace.dt_hours)
        self.tso_state = tso.TsoState(g_prev=outcome.g.copy(), p_acc_prev=outcome.p_acc)
        self.p_acc_prev = outcome.p_acc
        self.kappa_prev = outcome.kappa
        rec = StepRecord(
            t=t, obs=obs, action=action, p_req=p_req, p_acc=outcome.p_acc,
            kappa=outcome.kappa, mechanism=outcome.mechanism, execution=execution,
            reward=reward, reward_components=components,
            e_bess_after=self.aidc.e_bess, delivered_after=self.aidc.delivered.copy(),
            dispatch_cost=outcome.dispatch_cost,
            max_line_utilization=outcome.max_line_utilization)
        self.record.steps.append(rec)
        self.t += 1
        self.done = self.t > self.horizon
        if self.done:
            self._finalize()
        info = {"p_req": p_req, "p_acc": outcome.p_acc, "kappa": outcome.kappa,
                "mechanism": outcome.mechanism}
        return self._observation(), reward, self.done, info, rec

    def _finalize(self):
        self.record.delivered = self.aidc.delivered.copy()
        self.record.shortfall = plant.terminal_shortfall(self.aidc)
        init = self.scenario.aidc.bess.e_init_mwh
        self.record.terminal_soc_deviation_mwh = abs(self.aidc.e_bess - init)


def run_episode(scenario: Scenario, policy, engine: EpisodeEngine | None = None,
                raise_on_infeasible: bool = False) -> EpisodeRecord:
    """Drive policy.act over one full episode. TSO infeasibility aborts
    the episode; the partial record carries the diagnostic."""
    eng = engine if engine is not None else EpisodeEngine(scenario)
    obs = eng.reset()
    while not eng.done:
        try:
            obs, _, _, _, _ = eng.step(policy.act(obs))
        except (GridInfeasibleError, PlantError):
            if raise_on_infeasible:
                raise
            break
    return eng.record


# ---------------------------------------------------------------------------
# metrics
# ---------------------------------------------------------------------------

@dataclass
class RegimeStats:
    p_req: float
    kappa: float
    s_1a: float
    s_1b: float
    s_2: float


@dataclass
class MetricsReport:
    cumulative_reward: float
    mean_kappa_mw: float
    curtailment_frequency_pct: float
    w_1a_pct: float
    w_1b_pct: float
    curtailed_energy_mwh: float
    bess_idle_fraction_pct: float
    terminal_soc_deviation_mwh: float
    peak: RegimeStats
    offpeak: RegimeStats
    delta: RegimeStats            # off-peak minus peak
    completion_lag_1a_pct: list[float]
    completion_lag_1b_pct: list[float]
    steps: int
    aborted: bool
    dt_hours: float = 0.25

    def to_dict(self) -> dict:
        out = {}
        for key, val in self.__dict__.items():
            if isinstance(val, RegimeStats):
                out[key] = val.__dict__
            else:
                out[key] = val
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def _regime_means(records: list[StepRecord], mask: np.ndarray) -> RegimeStats:
    if not np.any(mask):
        return RegimeStats(*(float("nan"),) * 5)
    sel = [r for r, m in zip(records, mask) if m]
    return RegimeStats(
        p_req=float(np.mean([r.p_req for r in sel])),
        kappa=float(np.mean([r.kappa for r in sel])),
        s_1a=float(np.mean([r.execution.s[0] for r in sel])),
        s_1b=float(np.mean([r.execution.s[1] for r in sel])),
        s_2=float(np.mean([r.execution.s[2] for r in sel])),
    )


def compute_metrics(episode: EpisodeRecord, trace) -> MetricsReport:
    """Aggregate an episode into the summary metrics: curtailment volume
    and frequency, workload completion, peak/off-peak contrasts (above
    the 75th / below the 25th demand percentile), completion-lag series,
    and battery usage."""
    recs = episode.steps
    n = len(recs)
    kappas = np.array([r.kappa for r in recs]) if n else np.zeros(0)
    demand = trace.demand[:n]
    p75 = float(np.percentile(trace.demand, 75))
    p25 = float(np.percentile(trace.demand, 25))
    peak_mask = demand >= p75
    off_mask = demand <= p25
    peak = _regime_means(recs, peak_mask)
    off = _regime_means(recs, off_mask)
    delta = RegimeStats(*(getattr(off, f) - getattr(peak, f)
                          for f in ("p_req", "kappa", "s_1a", "s_1b", "s_2")))
    lag = {0: [], 1: []}
    for r in recs:
        for k in (0, 1):
            target = episode.targets[k]
            if target > 0:
                pace = (r.t / episode.horizon) * target
                lag[k].append(100.0 * max(0.0, pace - r.delivered_after[k]) / target)
            else:
                lag[k].append(0.0)
    idle = [r.execution.p_ch == 0.0 and r.execution.p_dis == 0.0 for r in recs]
    completion = [100.0, 100.0]
    for k in (0, 1):
        if episode.targets[k] > 0:
            completion[k] = min(100.0, 100.0 * episode.delivered[k] / episode.targets[k])
    return MetricsReport(
        cumulative_reward=float(sum(r.reward for r in recs)),
        mean_kappa_mw=float(kappas.mean()) if n else 0.0,
        curtailment_frequency_pct=100.0 * float(np.mean(kappas > 0)) if n else 0.0,
        w_1a_pct=completion[0],
        w_1b_pct=completion[1],
        curtailed_energy_mwh=float(kappas.sum() * episode.dt_hours),
        bess_idle_fraction_pct=100.0 * float(np.mean(idle)) if n else 100.0,
        terminal_soc_deviation_mwh=episode.terminal_soc_deviation_mwh,
        peak=peak, offpeak=off, delta=delta,
        completion_lag_1a_pct=lag[0], completion_lag_1b_pct=lag[1],
        steps=n, aborted=episode.aborted, dt_hours=episode.dt_hours,
    )


# ---------------------------------------------------------------------------
# robustness sweeps
# ---------------------------------------------------------------------------

STATUS_OK = "ok"
STATUS_INFEASIBLE = "infeasible"


@dataclass
class SweepCell:
    gamma_u: float
    epsilon: float
    curtail_freq_pct: float | None    # None when the cell is infeasible
    status: str
    mechanisms: dict[str, int]


@dataclass
class SweepReport:
    cells: list[SweepCell]

    def grid(self, gammas, epsilons) -> np.ndarray:
        """Frequencies as a (len(gammas), len(epsilons)) array, NaN where
        infeasible."""
        lookup = {(c.gamma_u, c.epsilon): c for c in self.cells}
        out = np.full((len(gammas), len(epsilons)), np.nan)
        for i, g in enumerate(gammas):
            for j, e in enumerate(epsilons):
                c = lookup[(g, e)]
                if c.status == STATUS_OK:
                    out[i, j] = c.curtail_freq_pct
        return out

    def to_csv(self) -> str:
        lines = ["gamma,eps,curtail_freq,status"]
        for c in self.cells:
            freq = "" if c.curtail_freq_pct is None else f"{c.curtail_freq_pct:.6f}"
            lines.append(f"{c.gamma_u:g},{c.epsilon:g},{freq},{c.status}")
        return "\n".join(lines) + "\n"


def sweep(scenario: Scenario, gammas, epsilons, policy_factory) -> SweepReport:
    """Run one episode per (budget, deviation-ratio) cell and collect the
    curtailment frequency. Infeasible cells are first-class results, kept
    distinct from any frequency value.

    policy_factory(scenario) -> policy, fresh per cell so stateful
    policies cannot leak across cells. The baseline dispatch is shared
    (it does not depend on the robustness configuration)."""
    base_engine = EpisodeEngine(scenario)
    cells = []
    for g in gammas:
        for e in epsilons:
            cell_scn = scenario.with_tso(gamma_u=float(g), epsilon=float(e))
            engine = EpisodeEngine.with_retuned_protection(cell_scn, base_engine)
            episode = run_episode(cell_scn, policy_factory(cell_scn), engine=engine)
            if episode.aborted:
                cells.append(SweepCell(float(g), float(e), None,
                                       STATUS_INFEASIBLE, {}))
                continue
            metrics = compute_metrics(episode, base_engine.trace)
            mechs: dict[str, int] = {}
            for r in episode.steps:
                if r.kappa > 0:
                    mechs[r.mechanism] = mechs.get(r.mechanism, 0) + 1
            cells.append(SweepCell(float(g), float(e),
                                   metrics.curtailment_frequency_pct,
                                   STATUS_OK, mechs))
    return SweepReport(cells)
