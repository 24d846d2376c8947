"""Minimal deterministic linear-programming layer.

Builds minimize-form LPs from named variables and constraints and solves
them with the HiGHS backend shipped in scipy. Every optimizer in the
package (grid-side acceptance, baseline dispatch, execution branches)
goes through this module, so determinism and dual reporting are pinned
here once.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

LEQ = "<="
EQ = "="
GEQ = ">="

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
NUMERICAL = "numerical"


class LpError(Exception):
    """Malformed problem or solver breakdown."""


@dataclass
class Constraint:
    name: str
    coeffs: list[tuple[int, float]]  # (variable index, coefficient)
    sense: str
    rhs: float


@dataclass
class LinearProgram:
    """Minimize c'x subject to linear constraints and variable bounds."""

    var_names: list[str] = field(default_factory=list)
    lower: list[float] = field(default_factory=list)
    upper: list[float] = field(default_factory=list)
    objective: dict[int, float] = field(default_factory=dict)
    constraints: list[Constraint] = field(default_factory=list)

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf) -> int:
        if lb > ub:
            raise LpError(f"variable {name}: lower bound {lb} > upper bound {ub}")
        self.var_names.append(name)
        self.lower.append(lb)
        self.upper.append(ub)
        return len(self.var_names) - 1

    @property
    def num_vars(self) -> int:
        return len(self.var_names)

    def set_objective_coeff(self, idx: int, coeff: float) -> None:
        if not np.isfinite(coeff):
            raise LpError(f"non-finite objective coefficient for {self.var_names[idx]}")
        self.objective[idx] = self.objective.get(idx, 0.0) + coeff

    def add_constraint(
        self, name: str, coeffs: list[tuple[int, float]], sense: str, rhs: float
    ) -> None:
        if sense not in (LEQ, EQ, GEQ):
            raise LpError(f"constraint {name}: unknown sense {sense!r}")
        for idx, _ in coeffs:
            if not 0 <= idx < self.num_vars:
                raise LpError(f"constraint {name}: references undeclared variable {idx}")
        self.constraints.append(Constraint(name, coeffs, sense, rhs))

    def constraint_index(self) -> dict[str, int]:
        return {c.name: i for i, c in enumerate(self.constraints)}

    def to_lp_text(self) -> str:
        """Dump in CPLEX LP text format for external cross-checking."""

        def term(coef: float, name: str) -> str:
            sign = "+" if coef >= 0 else "-"
            return f" {sign} {abs(coef):.12g} {name}"

        lines = ["\\Problem dumped by dcgridsim.lp", "Minimize", " obj:"]
        obj = "".join(term(c, self.var_names[i]) for i, c in sorted(self.objective.items()))
        lines[-1] += obj if obj else " 0 " + (self.var_names[0] if self.var_names else "x0")
        lines.append("Subject To")
        rel = {LEQ: "<=", EQ: "=", GEQ: ">="}
        for c in self.constraints:
            body = "".join(term(v, self.var_names[i]) for i, v in c.coeffs)
            lines.append(f" {c.name}:{body} {rel[c.sense]} {c.rhs:.12g}")
        lines.append("Bounds")
        for i, name in enumerate(self.var_names):
            lo, hi = self.lower[i], self.upper[i]
            lo_s = "-inf" if lo == -np.inf else f"{lo:.12g}"
            hi_s = "+inf" if hi == np.inf else f"{hi:.12g}"
            lines.append(f" {lo_s} <= {name} <= {hi_s}")
        lines.append("End")
        return "\n".join(lines) + "\n"


@dataclass
class LpSolution:
    status: str
    x: np.ndarray
    objective: float
    duals: np.ndarray  # one entry per constraint, 0.0 when not optimal
    reduced_lower: np.ndarray
    reduced_upper: np.ndarray
    iterations: int
    message: str = ""

    def value(self, idx: int) -> float:
        return float(self.x[idx])


def _assemble(lp: LinearProgram):
    n = lp.num_vars
    c = np.zeros(n)
    for i, v in lp.objective.items():
        c[i] = v
    rows_ub, cols_ub, vals_ub, b_ub, idx_ub = [], [], [], [], []
    rows_eq, cols_eq, vals_eq, b_eq, idx_eq = [], [], [], [], []
    for ci, con in enumerate(lp.constraints):
        if con.sense == EQ:
            r = len(b_eq)
            for j, v in con.coeffs:
                rows_eq.append(r)
                cols_eq.append(j)
                vals_eq.append(v)
            b_eq.append(con.rhs)
            idx_eq.append(ci)
        else:
            # GEQ rows are negated into <= form.
            sgn = 1.0 if con.sense == LEQ else -1.0
            r = len(b_ub)
            for j, v in con.coeffs:
                rows_ub.append(r)
                cols_ub.append(j)
                vals_ub.append(sgn * v)
            b_ub.append(sgn * con.rhs)
            idx_ub.append(ci)
    A_ub = (
        sparse.csr_matrix((vals_ub, (rows_ub, cols_ub)), shape=(len(b_ub), n))
        if b_ub
        else None
    )
    A_eq = (
        sparse.csr_matrix((vals_eq, (rows_eq, cols_eq)), shape=(len(b_eq), n))
        if b_eq
        else None
    )
    return c, A_ub, np.array(b_ub), idx_ub, A_eq, np.array(b_eq), idx_eq


def solve_lp(lp: LinearProgram, feas_tol: float = 1e-9) -> LpSolution:
    """Solve to optimality with HiGHS (dual simplex, single thread).

    Deterministic: identical problems yield identical primal vectors.
    Dual values follow the shadow-price convention d(objective)/d(rhs);
    GEQ rows are reported against the constraint as written.
    """
    if lp.num_vars == 0:
        raise LpError("empty problem")
    c, A_ub, b_ub, idx_ub, A_eq, b_eq, idx_eq = _assemble(lp)
    bounds = list(zip(lp.lower, lp.upper))
    res = linprog(
        c,
        A_ub=A_ub,
        b_ub=b_ub if A_ub is not None else None,
        A_eq=A_eq,
        b_eq=b_eq if A_eq is not None else None,
        bounds=bounds,
        method="highs",
        options={
            "presolve": True,
            "primal_feasibility_tolerance": feas_tol,
            "dual_feasibility_tolerance": feas_tol,
        },
    )
    n_con = len(lp.constraints)
    duals = np.zeros(n_con)
    red_lo = np.zeros(lp.num_vars)
    red_up = np.zeros(lp.num_vars)
    if res.status == 0:
        x = np.asarray(res.x, dtype=float)
        if res.ineqlin is not None and len(idx_ub):
            for r, ci in enumerate(idx_ub):
                sgn = 1.0 if lp.constraints[ci].sense == LEQ else -1.0
                duals[ci] = sgn * res.ineqlin.marginals[r]
        if res.eqlin is not None and len(idx_eq):
            for r, ci in enumerate(idx_eq):
                duals[ci] = res.eqlin.marginals[r]
        red_lo = np.asarray(res.lower.marginals, dtype=float)
        red_up = np.asarray(res.upper.marginals, dtype=float)
        return LpSolution(OPTIMAL, x, float(res.fun), duals, red_lo, red_up,
                          int(res.nit), res.message)
    status = {2: INFEASIBLE, 3: UNBOUNDED}.get(res.status, NUMERICAL)
    x = np.full(lp.num_vars, np.nan)
    return LpSolution(status, x, np.nan, duals, red_lo, red_up,
                      int(getattr(res, "nit", 0) or 0), res.message)


def constraint_activity(lp: LinearProgram, x: np.ndarray) -> np.ndarray:
    """Left-hand-side values of every constraint at the point x."""
    act = np.zeros(len(lp.constraints))
    for i, con in enumerate(lp.constraints):
        act[i] = sum(v * x[j] for j, v in con.coeffs)
    return act


def max_violation(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest constraint/bound violation at x (0 when feasible)."""
    worst = 0.0
    act = constraint_activity(lp, x)
    for i, con in enumerate(lp.constraints):
        if con.sense == LEQ:
            worst = max(worst, act[i] - con.rhs)
        elif con.sense == GEQ:
            worst = max(worst, con.rhs - act[i])
        else:
            worst = max(worst, abs(act[i] - con.rhs))
    lo = np.asarray(lp.lower)
    hi = np.asarray(lp.upper)
    worst = max(worst, float(np.max(np.where(np.isfinite(lo), lo - x, 0.0), initial=0.0)))
    worst = max(worst, float(np.max(np.where(np.isfinite(hi), x - hi, 0.0), initial=0.0)))
    return worst
