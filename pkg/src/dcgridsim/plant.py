"""Data-center physical model behind the coupling point.

Cluster power curves are linear in normalized throughput; cooling is a
fixed overhead on IT power; the DC path (IT plus battery) passes through
the conditioning system while cooling draws AC-side. The execution
optimizer allocates an accepted power budget by solving the two battery
branches (charge-only, discharge-only) as LPs and keeping the cheaper
one, which handles the single mode binary exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import lp
from .scenario import AidcConfig, BessSpec, ClusterSpec

GROUPS = ("1a", "1b", "2")


class PlantError(Exception):
    """Physically impossible request reached the plant layer."""


# ---------------------------------------------------------------------------
# power curves and balances
# ---------------------------------------------------------------------------

def it_power(spec: ClusterSpec, s: float) -> float:
    """Group IT draw at normalized throughput s: idle floor plus a linear
    span to peak."""
    if not -1e-12 <= s <= 1 + 1e-12:
        raise ValueError(f"throughput {s} outside [0,1]")
    return spec.p_idle_mw + spec.p_span_mw * float(np.clip(s, 0.0, 1.0))


def total_it_power(cfg: AidcConfig, s: np.ndarray) -> float:
    return sum(it_power(spec, s[i]) for i, spec in enumerate(cfg.clusters))


def facility_power(cfg: AidcConfig, s: np.ndarray, p_ch: float, p_dis: float) -> float:
    """Grid-side draw for given throughputs and battery setpoints:
    (P_IT + P_ch - P_dis) / eta_ipcs + gamma * P_IT."""
    p_it = total_it_power(cfg, s)
    draw = (p_it + p_ch - p_dis) / cfg.ipcs_efficiency + cfg.cooling_overhead * p_it
    if draw < -1e-9:
        raise PlantError(f"negative facility draw {draw:.3f} MW")
    return draw


def idle_floor(cfg: AidcConfig) -> float:
    """Minimum draw with all clusters in deep idle and the battery idle."""
    return facility_power(cfg, np.zeros(3), 0.0, 0.0)


def soc_step(e_bess: float, p_ch: float, p_dis: float, dt_hours: float,
             spec: BessSpec) -> float:
    """Advance the state of charge one step; callers must have enforced
    the post-update bounds through the optimizer."""
    e_next = e_bess + (spec.eta_ch * p_ch - p_dis / spec.eta_dis) * dt_hours
    if not spec.e_min_mwh - 1e-6 <= e_next <= spec.e_max_mwh + 1e-6:
        raise PlantError(
            f"SoC update to {e_next:.4f} MWh leaves [{spec.e_min_mwh}, {spec.e_max_mwh}]; "
            "optimizer bound enforcement failed")
    return e_next


# ---------------------------------------------------------------------------
# state and decisions
# ---------------------------------------------------------------------------

@dataclass
class AidcState:
    e_bess: float
    s_prev: np.ndarray          # executed throughputs at t-1, order (1a, 1b, 2)
    delivered: np.ndarray       # cumulative throughput-hours per group
    targets: np.ndarray         # absolute targets (throughput-hours) for 1a, 1b

    @classmethod
    def initial(cls, cfg: AidcConfig, horizon_steps: int, dt_hours: float) -> "AidcState":
        total = horizon_steps * dt_hours
        targets = np.array([cfg.cluster("1a").workload_target * total,
                            cfg.cluster("1b").workload_target * total])
        return cls(e_bess=cfg.bess.e_init_mwh, s_prev=np.zeros(3),
                   delivered=np.zeros(3), targets=targets)

    def remaining(self) -> np.ndarray:
        """Nonnegative remaining targets for the two training groups."""
        return np.maximum(self.targets - self.delivered[:2], 0.0)


@dataclass(frozen=True)
class PlanningAction:
    s_1a: float
    s_1b: float
    s_2: float
    phi_ch: float
    phi_dis: float

    def as_array(self) -> np.ndarray:
        return np.array([self.s_1a, self.s_1b, self.s_2, self.phi_ch, self.phi_dis])

    @classmethod
    def from_array(cls, a) -> "PlanningAction":
        a = np.asarray(a, dtype=float)
        if a.shape != (5,):
            raise ValueError(f"planning action must have 5 entries, got shape {a.shape}")
        if np.any(a < -1e-9) or np.any(a > 1 + 1e-9):
            raise ValueError("planning action leaves [0,1]^5")
        a = np.clip(a, 0.0, 1.0)
        return cls(*a)


@dataclass
class ExecutionResult:
    s: np.ndarray               # executed throughputs (1a, 1b, 2)
    p_ch: float
    p_dis: float
    beta: int
    p_it_groups: np.ndarray
    p_it: float
    p_cool: float
    u: np.ndarray               # tracking deviations per group
    r_2: float                  # rejected inference rate
    balance_residual: float
    objective: float


# ---------------------------------------------------------------------------
# execution optimizer
# ---------------------------------------------------------------------------

def _branch_lp(targets: np.ndarray, p_acc: float, state: AidcState,
               cfg: AidcConfig, dt_hours: float, d_inf: float, charge: bool):
    b = cfg.bess
    spans = np.array([c.p_span_mw for c in cfg.clusters])
    idle_sum = sum(c.p_idle_mw for c in cfg.clusters)
    inv_eta = 1.0 / cfg.ipcs_efficiency
    mult = inv_eta + cfg.cooling_overhead
    prob = lp.LinearProgram()
    s_idx = [prob.add_var(f"s[{g}]", 0.0, 1.0 if g != "2" else float(min(1.0, d_inf)))
             for g in GROUPS]
    if charge:
        cap = min(b.p_max_mw, max(0.0, (b.e_max_mwh - state.e_bess) / (b.eta_ch * dt_hours)))
        p_idx = prob.add_var("p_ch", 0.0, cap)
        p_sign = +1.0
    else:
        cap = min(b.p_max_mw, max(0.0, (state.e_bess - b.e_min_mwh) * b.eta_dis / dt_hours))
        p_idx = prob.add_var("p_dis", 0.0, cap)
        p_sign = -1.0
    u_idx = [prob.add_var(f"u[{g}]", 0.0) for g in GROUPS]
    for i in range(3):
        prob.set_objective_coeff(u_idx[i], cfg.tracking_weight)
    prob.set_objective_coeff(p_idx, b.cycle_cost * dt_hours)
    # exact grid-side balance
    coeffs = [(s_idx[i], float(mult * spans[i])) for i in range(3)]
    coeffs.append((p_idx, p_sign * inv_eta))
    prob.add_constraint("balance", coeffs, lp.EQ, float(p_acc - mult * idle_sum))
    for i in range(3):
        prob.add_constraint(f"u_hi[{i}]", [(u_idx[i], 1.0), (s_idx[i], -1.0)],
                            lp.GEQ, float(-targets[i]))
        prob.add_constraint(f"u_lo[{i}]", [(u_idx[i], 1.0), (s_idx[i], 1.0)],
                            lp.GEQ, float(targets[i]))
    return prob, s_idx, p_idx


def execute_step(action: PlanningAction, p_acc: float, state: AidcState,
                 d_inf: float, cfg: AidcConfig, dt_hours: float) -> ExecutionResult:
    """Allocate the accepted budget: tracking-optimal throughputs and
    battery setpoints under the exact facility balance.

    The inference target is clipped to current demand before optimizing,
    so tracking never rewards serving requests that do not exist. Budgets
    below the idle floor are admissible exactly as far as the battery can
    bridge them; past that the step is physically impossible and raises.
    """
    targets = np.array([action.s_1a, action.s_1b, min(action.s_2, d_inf)])
    best = None
    for charge in (False, True):
        prob, s_idx, p_idx = _branch_lp(targets, p_acc, state, cfg, dt_hours,
                                        d_inf, charge)
        sol = lp.solve_lp(prob)
        if sol.status != lp.OPTIMAL:
            continue
        if best is None or sol.objective < best[0].objective - 1e-12:
            best = (sol, s_idx, p_idx, charge)
    if best is None:
        raise PlantError(
            f"accepted power {p_acc:.3f} MW outside the feasible envelope: "
            f"idle floor {idle_floor(cfg):.3f} MW, SoC {state.e_bess:.2f} MWh "
            "cannot bridge the gap")
    sol, s_idx, p_idx, charge = best
    s = np.clip(np.array([sol.x[i] for i in s_idx]), 0.0, 1.0)
    p_ch = float(sol.x[p_idx]) if charge else 0.0
    p_dis = 0.0 if charge else float(sol.x[p_idx])
    if p_ch < 1e-11:
        p_ch = 0.0
    if p_dis < 1e-11:
        p_dis = 0.0
    groups = np.array([it_power(c, s[i]) for i, c in enumerate(cfg.clusters)])
    p_it = float(groups.sum())
    residual = facility_power(cfg, s, p_ch, p_dis) - p_acc
    u = np.abs(s - targets)
    objective = cfg.tracking_weight * float(u.sum()) + cfg.bess.cycle_cost * (p_ch + p_dis) * dt_hours
    return ExecutionResult(
        s=s, p_ch=p_ch, p_dis=p_dis, beta=1 if p_ch > 0 else 0,
        p_it_groups=groups, p_it=p_it, p_cool=cfg.cooling_overhead * p_it,
        u=u, r_2=float(max(d_inf - s[2], 0.0)),
        balance_residual=float(residual), objective=float(objective),
    )


# ---------------------------------------------------------------------------
# verification helpers
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityItem:
    name: str
    passed: bool
    slack: float     # >= 0 when satisfied; negative is the violation size


@dataclass
class FeasibilityReport:
    items: list[FeasibilityItem]

    @property
    def ok(self) -> bool:
        return all(i.passed for i in self.items)

    def failed(self) -> list[FeasibilityItem]:
        return [i for i in self.items if not i.passed]


def feasibility_check(x: ExecutionResult, p_acc: float, state: AidcState,
                      d_inf: float, cfg: AidcConfig, dt_hours: float,
                      tol: float = 1e-6) -> FeasibilityReport:
    """Itemized pass/fail over the plant constraint set with numeric slacks."""
    items = []

    def add(name, slack):
        items.append(FeasibilityItem(name, slack >= -tol, float(slack)))

    for i, g in enumerate(GROUPS):
        add(f"throughput_lower[{g}]", x.s[i])
        add(f"throughput_upper[{g}]", 1.0 - x.s[i])
    add("inference_demand_cap", d_inf - x.s[2])
    add("rejection_rate_consistent", tol - abs(x.r_2 - (d_inf - x.s[2])))
    b = cfg.bess
    add("charge_lower", x.p_ch)
    add("charge_upper", (b.p_max_mw if x.beta == 1 else 0.0) - x.p_ch)
    add("discharge_lower", x.p_dis)
    add("discharge_upper", (b.p_max_mw if x.beta == 0 else 0.0) - x.p_dis)
    add("mode_exclusive", tol - x.p_ch * x.p_dis)
    e_next = state.e_bess + (b.eta_ch * x.p_ch - x.p_dis / b.eta_dis) * dt_hours
    add("soc_lower", e_next - b.e_min_mwh)
    add("soc_upper", b.e_max_mwh - e_next)
    residual = facility_power(cfg, x.s, x.p_ch, x.p_dis) - p_acc
    add("grid_balance", tol - abs(residual))
    add("nonnegative_draw", p_acc)
    return FeasibilityReport(items)


def terminal_shortfall(state: AidcState) -> dict[str, float]:
    """Nonnegative under-delivery of the two training groups at horizon end."""
    short = np.maximum(state.targets - state.delivered[:2], 0.0)
    return {"1a": float(short[0]), "1b": float(short[1])}
