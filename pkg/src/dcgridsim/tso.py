"""Transmission operator side of the protocol.

The network is reduced to PTDF sensitivities once per case. A horizon
baseline dispatch (no data center, point-forecast demand) anchors the
redispatch penalty. Demand uncertainty is a per-step budget set; with
fixed participation factors the worst case over the set reduces to a
deterministic tightening of every line and generator constraint, so the
per-step acceptance problem stays a single LP in the generator outputs
and the curtailment variable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace as _replace
from itertools import combinations, product

import numpy as np

from . import lp
from .scenario import ExogenousTrace, NetworkCase, TsoConfig

MECH_NONE = "none"
MECH_CONGESTION = "congestion"
MECH_RAMP = "ramp"
MECH_ROBUSTNESS = "robustness"
MECH_MIXED = "mixed"

_KAPPA_TOL = 1e-6


class GridModelError(Exception):
    """Degenerate network (singular reduced susceptance matrix)."""


class GridInfeasibleError(Exception):
    """A dispatch problem has an empty feasible set."""

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


# ---------------------------------------------------------------------------
# network sensitivities
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PtdfMatrix:
    """Line-flow sensitivities to nodal MW injections (reference column zero)."""

    mat: np.ndarray                 # lines x buses
    buses: tuple[int, ...]
    ref_pos: int
    aidc_pos: int
    gen_pos: np.ndarray             # bus column per generator

    def flows(self, injections_mw: np.ndarray) -> np.ndarray:
        return self.mat @ injections_mw

    @property
    def gen_cols(self) -> np.ndarray:
        """lines x generators sensitivity block."""
        return self.mat[:, self.gen_pos]


def _incidence_and_susceptance(case: NetworkCase):
    pos = case.bus_index()
    n, m = len(case.buses), len(case.lines)
    a = np.zeros((m, n))
    b = np.zeros(m)
    for i, ln in enumerate(case.lines):
        a[i, pos[ln.from_bus]] = 1.0
        a[i, pos[ln.to_bus]] = -1.0
        b[i] = ln.b_pu
    return a, b, pos


def compute_ptdf(case: NetworkCase) -> PtdfMatrix:
    """Reduce the susceptance Laplacian at the reference bus and form the
    standard injection-shift matrix. Raises GridModelError when the
    reduced matrix is singular (disconnected or degenerate network)."""
    a, b, pos = _incidence_and_susceptance(case)
    n = len(case.buses)
    lap = a.T @ (b[:, None] * a)
    r = pos[case.ref_bus]
    keep = [i for i in range(n) if i != r]
    reduced = lap[np.ix_(keep, keep)]
    if np.linalg.cond(reduced) > 1e12:
        raise GridModelError("reduced susceptance matrix is singular; check connectivity")
    inv = np.linalg.inv(reduced)
    x_full = np.zeros((n, n))
    x_full[np.ix_(keep, keep)] = inv
    mat = (b[:, None] * a) @ x_full
    mat[:, r] = 0.0
    gen_pos = np.array([pos[g.bus] for g in case.generators])
    return PtdfMatrix(mat=mat, buses=case.buses, ref_pos=r,
                      aidc_pos=pos[case.aidc_bus], gen_pos=gen_pos)


def theta_flows(case: NetworkCase, injections_mw: np.ndarray) -> np.ndarray:
    """Reference oracle: solve the angle equations directly and return
    line flows B_l (theta_i - theta_j) in MW. Injections must balance."""
    a, b, pos = _incidence_and_susceptance(case)
    n = len(case.buses)
    lap = a.T @ (b[:, None] * a)
    r = pos[case.ref_bus]
    keep = [i for i in range(n) if i != r]
    theta = np.zeros(n)
    theta[keep] = np.linalg.solve(lap[np.ix_(keep, keep)], injections_mw[keep])
    return b * (a @ theta)


# ---------------------------------------------------------------------------
# baseline dispatch
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BaselineDispatch:
    g: np.ndarray            # T x G
    flows: np.ndarray        # T x L
    cost: float
    per_step_cost: np.ndarray


def _dispatch_window_lp(case: NetworkCase, ptdf: PtdfMatrix, bus_demand: np.ndarray,
                        dt_hours: float, g_anchor: np.ndarray | None) -> lp.LinearProgram:
    """Multi-period economic dispatch over the given demand rows.
    g_anchor, when given, ramp-couples the first step to fixed outputs."""
    gens = case.generators
    steps, g_count = bus_demand.shape[0], len(gens)
    prob = lp.LinearProgram()
    for t in range(steps):
        for i, g in enumerate(gens):
            prob.add_var(f"g[{t},{i}]", g.g_min_mw, g.g_max_mw)
    var = lambda t, i: t * g_count + i
    for t in range(steps):
        for i, g in enumerate(gens):
            prob.set_objective_coeff(var(t, i), g.cost)
    ptdfg = ptdf.gen_cols
    ratings = np.array([ln.f_max_mw for ln in case.lines])
    for t in range(steps):
        total = float(bus_demand[t].sum())
        prob.add_constraint(f"bal[{t}]", [(var(t, i), 1.0) for i in range(g_count)],
                            lp.EQ, total)
        base = ptdf.mat @ bus_demand[t]
        for l in range(len(case.lines)):
            coeffs = [(var(t, i), float(ptdfg[l, i])) for i in range(g_count)]
            prob.add_constraint(f"fup[{t},{l}]", coeffs, lp.LEQ, float(ratings[l] + base[l]))
            prob.add_constraint(f"fdn[{t},{l}]", coeffs, lp.GEQ, float(-ratings[l] + base[l]))
        for i, g in enumerate(gens):
            limit = g.ramp_mw_per_h * dt_hours
            if t > 0:
                pair = [(var(t, i), 1.0), (var(t - 1, i), -1.0)]
                prob.add_constraint(f"rup[{t},{i}]", pair, lp.LEQ, limit)
                prob.add_constraint(f"rdn[{t},{i}]", pair, lp.GEQ, -limit)
            elif g_anchor is not None:
                prob.add_constraint(f"rup[0,{i}]", [(var(0, i), 1.0)], lp.LEQ,
                                    float(g_anchor[i] + limit))
                prob.add_constraint(f"rdn[0,{i}]", [(var(0, i), 1.0)], lp.GEQ,
                                    float(g_anchor[i] - limit))
    return prob


def _first_infeasible_step(case, ptdf, bus_demand, dt_hours) -> int:
    lo, hi = 1, bus_demand.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        prob = _dispatch_window_lp(case, ptdf, bus_demand[:mid], dt_hours, None)
        if lp.solve_lp(prob).status == lp.OPTIMAL:
            lo = mid + 1
        else:
            hi = mid
    return lo


def solve_baseline_dispatch(case: NetworkCase, trace: ExogenousTrace,
                            window_steps: int | None = None,
                            overlap_steps: int = 8) -> BaselineDispatch:
    """Horizon-optimal economic dispatch at forecast demand with the data
    center absent; the result anchors the acceptance problem's deviation
    penalty. Monolithic by default; optionally solved in overlapping
    windows for long horizons (each window committed up to its overlap).
    """
    if trace.bus_demand is None:
        raise ValueError("trace is not bound to load shares")
    ptdf = compute_ptdf(case)
    demand = trace.bus_demand
    steps, g_count = demand.shape[0], len(case.generators)
    if window_steps is None or window_steps >= steps:
        prob = _dispatch_window_lp(case, ptdf, demand, trace.dt_hours, None)
        sol = lp.solve_lp(prob)
        if sol.status != lp.OPTIMAL:
            bad = _first_infeasible_step(case, ptdf, demand, trace.dt_hours)
            raise GridInfeasibleError(
                f"baseline dispatch {sol.status}; first infeasible step {bad}", step=bad)
        g = sol.x[: steps * g_count].reshape(steps, g_count)
    else:
        if window_steps <= overlap_steps:
            raise ValueError("window must exceed overlap")
        g = np.zeros((steps, g_count))
        anchor = None
        start = 0
        while start < steps:
            stop = min(start + window_steps, steps)
            prob = _dispatch_window_lp(case, ptdf, demand[start:stop], trace.dt_hours, anchor)
            sol = lp.solve_lp(prob)
            if sol.status != lp.OPTIMAL:
                raise GridInfeasibleError(
                    f"baseline window [{start},{stop}) {sol.status}", step=start + 1)
            block = sol.x.reshape(stop - start, g_count)
            commit = stop - start if stop == steps else (window_steps - overlap_steps)
            g[start:start + commit] = block[:commit]
            anchor = g[start + commit - 1]
            start += commit
    costs = np.array([g.cost for g in case.generators])
    per_step = g @ costs
    flows = (ptdf.gen_cols @ g.T - ptdf.mat @ demand.T).T
    return BaselineDispatch(g=g, flows=flows, cost=float(per_step.sum()),
                            per_step_cost=per_step)


# ---------------------------------------------------------------------------
# budget-set protection
# ---------------------------------------------------------------------------

def budget_worst_case(impacts: np.ndarray, gamma: float) -> float:
    """Worst case of sum(xi_n * impacts_n) over the budget set
    {|xi| <= 1 componentwise, sum|xi| <= gamma}: the gamma largest
    magnitudes, with a fractional tail when gamma is not integral."""
    if gamma <= 0 or impacts.size == 0:
        return 0.0
    mags = np.sort(np.abs(impacts))[::-1]
    k = min(int(math.floor(gamma)), mags.size)
    total = float(mags[:k].sum())
    frac = gamma - math.floor(gamma)
    if frac > 0 and k < mags.size:
        total += frac * float(mags[k])
    return total


def participation_factors(case: NetworkCase, rule: str = "gmax") -> np.ndarray:
    """Fixed recourse: each generator absorbs a constant share of any
    realized total-demand deviation."""
    if rule == "uniform":
        a = np.ones(len(case.generators))
    elif rule == "gmax":
        a = np.array([g.g_max_mw for g in case.generators])
    else:
        raise ValueError(f"unknown participation rule {rule!r}")
    return a / a.sum()


@dataclass(frozen=True)
class ProtectionTerms:
    delta_f: np.ndarray      # T x L worst-case flow deviation, MW
    delta_d: np.ndarray      # T worst-case total-demand deviation, MW
    alpha: np.ndarray        # participation factors, sum 1
    gamma_u: float
    epsilon: float


def protection_terms(ptdf: PtdfMatrix, trace: ExogenousTrace, cfg: TsoConfig,
                     case: NetworkCase) -> ProtectionTerms:
    """Deterministic tightening terms for every line and for the aggregate
    demand, per step. With participation response alpha, a deviation
    pattern xi shifts line l by sum_n xi_n * eps * d_n * (phi_l - ptdf_ln)
    where phi_l = sum_i ptdf[l, bus(i)] * alpha_i; the budget worst case
    of that linear form is the sorted partial sum."""
    if trace.bus_demand is None:
        raise ValueError("trace is not bound to load shares")
    alpha = participation_factors(case, cfg.participation_rule)
    steps = trace.steps
    n_lines = len(case.lines)
    phi = ptdf.gen_cols @ alpha            # length L
    coef = phi[:, None] - ptdf.mat         # L x N, constant over time
    delta_f = np.zeros((steps, n_lines))
    delta_d = np.zeros(steps)
    if cfg.gamma_u <= 0:
        return ProtectionTerms(delta_f, delta_d, alpha, cfg.gamma_u, cfg.epsilon)
    for t in range(steps):
        scaled = cfg.epsilon * trace.bus_demand[t]
        impacts = np.abs(coef) * scaled[None, :]
        mags = np.sort(impacts, axis=1)[:, ::-1]
        k = min(int(math.floor(cfg.gamma_u)), mags.shape[1])
        part = mags[:, :k].sum(axis=1)
        frac = cfg.gamma_u - math.floor(cfg.gamma_u)
        if frac > 0 and k < mags.shape[1]:
            part = part + frac * mags[:, k]
        delta_f[t] = part
        delta_d[t] = budget_worst_case(scaled, cfg.gamma_u)
    return ProtectionTerms(delta_f, delta_d, alpha, cfg.gamma_u, cfg.epsilon)


# ---------------------------------------------------------------------------
# per-step robust acceptance
# ---------------------------------------------------------------------------

@dataclass
class TsoState:
    g_prev: np.ndarray           # realized dispatch at t-1
    p_acc_prev: float | None     # accepted exchange at t-1; None before step 1

    @classmethod
    def initial(cls, baseline: BaselineDispatch) -> "TsoState":
        return cls(g_prev=baseline.g[0].copy(), p_acc_prev=None)


@dataclass
class AcceptanceOutcome:
    p_req: float
    p_acc: float
    kappa: float
    g: np.ndarray
    flows: np.ndarray
    mechanism: str
    dispatch_cost: float
    objective: float
    max_line_utilization: float
    diagnostics: dict


def _acceptance_lp(p_req, g0_t, base_flow, demand_total, prot_f,
                   case, cfg, state, dt_hours, ptdfg, ptdf_a,
                   line_caps, gen_lo, gen_hi, pcc_ramp, kappa_ub=None):
    gens = case.generators
    g_count = len(gens)
    prob = lp.LinearProgram()
    for i in range(g_count):
        prob.add_var(f"g[{i}]", float(gen_lo[i]), float(gen_hi[i]))
    k = prob.add_var("kappa", 0.0, max(p_req, 0.0) if kappa_ub is None else kappa_ub)
    dev_p = [prob.add_var(f"dev+[{i}]", 0.0) for i in range(g_count)]
    dev_m = [prob.add_var(f"dev-[{i}]", 0.0) for i in range(g_count)]
    for i, g in enumerate(gens):
        prob.set_objective_coeff(i, g.cost)
        prob.set_objective_coeff(dev_p[i], cfg.deviation_weight)
        prob.set_objective_coeff(dev_m[i], cfg.deviation_weight)
    prob.set_objective_coeff(k, cfg.kappa_weight)
    prob.add_constraint("balance", [(i, 1.0) for i in range(g_count)] + [(k, 1.0)],
                        lp.EQ, float(demand_total + p_req))
    for l in range(len(case.lines)):
        if not np.isfinite(line_caps[l]):
            continue
        coeffs = [(i, float(ptdfg[l, i])) for i in range(g_count)] + [(k, float(ptdf_a[l]))]
        limit = float(line_caps[l] - prot_f[l])
        const = float(base_flow[l] + ptdf_a[l] * p_req)
        prob.add_constraint(f"fup[{l}]", coeffs, lp.LEQ, limit + const)
        prob.add_constraint(f"fdn[{l}]", coeffs, lp.GEQ, -limit + const)
    for i, g in enumerate(gens):
        prob.add_constraint(f"dev[{i}]", [(i, 1.0), (dev_p[i], -1.0), (dev_m[i], 1.0)],
                            lp.EQ, float(g0_t[i]))
        limit = g.ramp_mw_per_h * dt_hours
        if np.isfinite(limit):
            prob.add_constraint(f"rup[{i}]", [(i, 1.0)], lp.LEQ, float(state.g_prev[i] + limit))
            prob.add_constraint(f"rdn[{i}]", [(i, 1.0)], lp.GEQ, float(state.g_prev[i] - limit))
    if state.p_acc_prev is not None and np.isfinite(pcc_ramp):
        # upward admission limit: p_acc - p_acc_prev <= R_grid, with
        # p_acc = p_req - kappa
        prob.add_constraint("pcc_ramp", [(k, -1.0)], lp.LEQ,
                            float(pcc_ramp + state.p_acc_prev - p_req))
    return prob, k


def _solve_kappa(p_req, g0_t, base_flow, demand_total, prot_f, prot_d, alpha,
                 case, cfg, state, dt_hours, ptdfg, ptdf_a, *,
                 relax: frozenset = frozenset(), kappa_ub=None):
    """Solve one acceptance LP with the given constraint classes relaxed;
    returns (solution, kappa_index, problem), or (None, None, None) when
    tightened limits cross before the solver is even called."""
    gens = case.generators
    ratings = np.array([ln.f_max_mw for ln in case.lines], dtype=float)
    prot_f_eff = prot_f.copy()
    prot_d_eff = float(prot_d)
    pcc_ramp = cfg.pcc_ramp_mw
    ramp_case = case
    if MECH_ROBUSTNESS in relax:
        prot_f_eff[:] = 0.0
        prot_d_eff = 0.0
    gen_lo = np.array([g.g_min_mw for g in gens]) + prot_d_eff * alpha
    gen_hi = np.array([g.g_max_mw for g in gens]) - prot_d_eff * alpha
    line_caps = ratings.copy()
    if MECH_CONGESTION in relax:
        line_caps[:] = np.inf
        big = demand_total + p_req + 10.0 * sum(g.g_max_mw for g in gens)
        gen_lo = np.zeros(len(gens))
        gen_hi = np.full(len(gens), big)
    if MECH_RAMP in relax:
        pcc_ramp = np.inf
        ramp_case = _replace(
            case, generators=tuple(_replace(g, ramp_mw_per_h=np.inf) for g in gens))
    if np.any(gen_lo > gen_hi) or np.any(line_caps - prot_f_eff < 0):
        return None, None, None
    prob, k = _acceptance_lp(p_req, g0_t, base_flow, demand_total, prot_f_eff,
                             ramp_case, cfg, state, dt_hours,
                             ptdfg, ptdf_a, line_caps, gen_lo, gen_hi, pcc_ramp,
                             kappa_ub=kappa_ub)
    sol = lp.solve_lp(prob, feas_tol=1e-9)
    return sol, k, prob


def _classify_mechanism(kappa, protection_active: bool, resolve) -> tuple[str, dict]:
    """Attribute curtailment by peeling constraint classes in nesting
    order: zero the protection terms, then drop line/generator capacity
    limits, then drop ramp coupling. Each relaxation only enlarges the
    feasible set, so the optimal curtailment decreases monotonically and
    the per-class drops decompose kappa exactly; a class contributes when
    its drop is material."""

    def solve_relaxed(classes) -> float:
        sol, k, _ = resolve(frozenset(classes))
        if sol is None or sol.status != lp.OPTIMAL:
            return np.inf
        return max(float(sol.x[k]), 0.0)

    k_rob = solve_relaxed({MECH_ROBUSTNESS}) if protection_active else kappa
    k_cong = solve_relaxed({MECH_ROBUSTNESS, MECH_CONGESTION})
    shares = {
        MECH_ROBUSTNESS: kappa - k_rob,
        MECH_CONGESTION: k_rob - k_cong,
        MECH_RAMP: k_cong,      # the fully relaxed problem accepts everything
    }
    tol = max(_KAPPA_TOL, 1e-3 * kappa)
    tags = [m for m, share in shares.items() if share > tol]
    if len(tags) == 1:
        return tags[0], shares
    return MECH_MIXED, shares


def robust_acceptance_step(p_req: float, t: int, baseline: BaselineDispatch,
                           protection: ProtectionTerms, state: TsoState,
                           case: NetworkCase, cfg: TsoConfig,
                           trace: ExogenousTrace,
                           ptdf: PtdfMatrix | None = None) -> AcceptanceOutcome:
    """Answer one power request (t is 1-based).

    Minimizes curtailment-weighted redispatch cost over the protected
    constraint set; when every constraint is slack the request is granted
    in full. Infeasibility is surfaced as GridInfeasibleError, never
    converted into full curtailment.
    """
    if p_req < 0:
        raise ValueError("power request must be nonnegative")
    if not 1 <= t <= trace.steps:
        raise ValueError(f"step {t} outside horizon 1..{trace.steps}")
    ti = t - 1
    if ptdf is None:
        ptdf = compute_ptdf(case)
    ptdfg = ptdf.gen_cols
    ptdf_a = ptdf.mat[:, ptdf.aidc_pos]
    demand_bus = trace.bus_demand[ti]
    base_flow = ptdf.mat @ demand_bus
    args = (p_req, baseline.g[ti], base_flow, float(demand_bus.sum()),
            protection.delta_f[ti], float(protection.delta_d[ti]),
            protection.alpha, case, cfg, state, trace.dt_hours, ptdfg, ptdf_a)
    sol, k_idx, prob = _solve_kappa(*args)
    if sol is None or sol.status != lp.OPTIMAL:
        status = sol.status if sol is not None else "tightened limits crossed"
        raise GridInfeasibleError(
            f"acceptance problem at step {t} is {status} "
            f"(gamma_u={cfg.gamma_u}, eps={cfg.epsilon})", step=t)
    g_count = len(case.generators)
    g = sol.x[:g_count].copy()
    kappa = float(min(max(sol.x[k_idx], 0.0), p_req))
    p_acc = p_req - kappa
    flows = ptdfg @ g - base_flow - ptdf_a * p_acc
    ratings = np.array([ln.f_max_mw for ln in case.lines])
    util = float(np.max(np.abs(flows) / ratings)) if len(ratings) else 0.0
    shares: dict = {}
    if kappa <= _KAPPA_TOL * max(1.0, p_req):
        kappa = 0.0
        p_acc = p_req
        mech = MECH_NONE
    else:
        protection_active = (protection.delta_d[ti] > 0
                             or np.any(protection.delta_f[ti] > 0))
        mech, shares = _classify_mechanism(
            kappa, bool(protection_active),
            lambda cls: _solve_kappa(*args, relax=cls))
    costs = np.array([gen.cost for gen in case.generators])
    return AcceptanceOutcome(
        p_req=p_req, p_acc=p_acc, kappa=kappa, g=g, flows=flows, mechanism=mech,
        dispatch_cost=float(costs @ g), objective=sol.objective,
        max_line_utilization=util,
        diagnostics={"iterations": sol.iterations, "status": sol.status,
                     "protection_delta_d": float(protection.delta_d[ti]),
                     "mechanism_shares": {m: float(v) for m, v in shares.items()}},
    )


def zero_curtailment_feasible(p_req: float, t: int, baseline: BaselineDispatch,
                              protection: ProtectionTerms, state: TsoState,
                              case: NetworkCase, cfg: TsoConfig,
                              trace: ExogenousTrace,
                              ptdf: PtdfMatrix | None = None) -> bool:
    """Whether the protected set admits a solution with the full request
    granted (curtailment pinned to zero); used to assert that curtailment
    really was a last resort."""
    if ptdf is None:
        ptdf = compute_ptdf(case)
    ti = t - 1
    demand_bus = trace.bus_demand[ti]
    sol, _, _ = _solve_kappa(
        p_req, baseline.g[ti], ptdf.mat @ demand_bus, float(demand_bus.sum()),
        protection.delta_f[ti], float(protection.delta_d[ti]), protection.alpha,
        case, cfg, state, trace.dt_hours, ptdf.gen_cols,
        ptdf.mat[:, ptdf.aidc_pos], kappa_ub=0.0)
    return sol is not None and sol.status == lp.OPTIMAL


# ---------------------------------------------------------------------------
# exhaustive robustness check (test harness)
# ---------------------------------------------------------------------------

@dataclass
class RobustnessReport:
    max_violation: float
    vertices_checked: int
    worst_vertex: np.ndarray | None


def enumerate_budget_vertices(n: int, gamma: float, cap: int = 200_000):
    """Yield the vertices of the budget set for n buses. Refuses (raises
    GridModelError) when the count would exceed cap."""
    if gamma <= 0:
        yield np.zeros(n)
        return
    k = int(math.floor(min(gamma, n)))
    frac = min(gamma, n) - k
    if frac == 0:
        est = math.comb(n, k) * 2 ** k
    else:
        est = math.comb(n, k) * (n - k) * 2 ** (k + 1)
    if est > cap:
        raise GridModelError(f"vertex enumeration would produce ~{est} vertices (> cap {cap})")
    for support in combinations(range(n), k):
        for signs in product((-1.0, 1.0), repeat=k):
            base = np.zeros(n)
            for pos, sgn in zip(support, signs):
                base[pos] = sgn
            if frac == 0:
                yield base
            else:
                rest = [j for j in range(n) if j not in support]
                for extra in rest:
                    for s in (-1.0, 1.0):
                        v = base.copy()
                        v[extra] = s * frac
                        yield v


def check_robust_feasibility(outcome: AcceptanceOutcome, case: NetworkCase,
                             trace: ExogenousTrace, cfg: TsoConfig, t: int,
                             vertex_cap: int = 200_000) -> RobustnessReport:
    """Verify the outcome against every vertex of the uncertainty set:
    participation-adjusted dispatch must respect generator bounds and the
    angle-consistent line flows must respect ratings."""
    ti = t - 1
    alpha = participation_factors(case, cfg.participation_rule)
    d_hat = trace.bus_demand[ti]
    pos = case.bus_index()
    gen_bus = [pos[g.bus] for g in case.generators]
    gmin = np.array([g.g_min_mw for g in case.generators])
    gmax = np.array([g.g_max_mw for g in case.generators])
    ratings = np.array([ln.f_max_mw for ln in case.lines])
    worst, worst_xi = 0.0, None
    checked = 0
    for xi in enumerate_budget_vertices(len(case.buses), cfg.gamma_u, vertex_cap):
        checked += 1
        d = d_hat * (1.0 + cfg.epsilon * xi)
        delta_total = float(cfg.epsilon * (xi @ d_hat))
        g_adj = outcome.g + alpha * delta_total
        inj = np.zeros(len(case.buses))
        for gi, col in enumerate(gen_bus):
            inj[col] += g_adj[gi]
        inj -= d
        inj[pos[case.aidc_bus]] -= outcome.p_acc
        flows = theta_flows(case, inj)
        v = max(
            float(np.max(np.abs(flows) - ratings, initial=0.0)),
            float(np.max(gmin - g_adj, initial=0.0)),
            float(np.max(g_adj - gmax, initial=0.0)),
            abs(float(inj.sum())),
        )
        if v > worst:
            worst, worst_xi = v, xi.copy()
    return RobustnessReport(max_violation=worst, vertices_checked=checked,
                            worst_vertex=worst_xi)
