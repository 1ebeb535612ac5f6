"""Thin LP/MIP layer over scipy's HiGHS bindings.

Models are built by name, solved in one shot, and report duals with a fixed
orientation convention: duals[c] is the derivative of the optimal objective
with respect to the right-hand side of constraint c as originally written.
With that convention the reduced cost of a column with objective coefficient
q and constraint coefficients a_c is q - sum_c duals[c] * a_c, independent of
each constraint's sense.

Lazy constraints are realized as a resolve loop (solve, separate, add, solve
again); no engine callbacks are required, so anything with a plain solve
entry point can back this module.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

from .model import FEASIBLE, INFEASIBLE, OPTIMAL, TIME_LIMIT, UNBOUNDED

INT_EPS = 1e-5    # integrality tolerance on reported MIP values
FEAS_EPS = 1e-6   # feasibility tolerance when checking solutions externally
RC_EPS = 1e-6     # reduced-cost negativity threshold

_BACKENDS = ("highs",)


def resolve_backend(name: Optional[str] = None) -> str:
    """Pick the engine from the argument or the `mp_backend` config key."""
    name = name or os.environ.get("STSPGL_MP_BACKEND") or "highs"
    if name not in _BACKENDS:
        raise ValueError(f"unknown mp_backend {name!r}; available: {_BACKENDS}")
    return name


@dataclass
class _Var:
    index: int
    lb: float
    ub: float
    obj: float
    integer: bool


@dataclass
class _Constr:
    name: str
    coeffs: Dict[str, float]
    sense: str   # "<=", ">=", "=="
    rhs: float


class LinearModel:
    """Mutable LP/MIP model with named variables and constraints."""

    def __init__(self, name: str = "model", maximize: bool = False):
        self.name = name
        self.maximize = maximize
        self.obj_offset = 0.0
        self._vars: Dict[str, _Var] = {}
        self._constrs: List[_Constr] = []
        self._cnames: set = set()

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                obj: float = 0.0, integer: bool = False) -> str:
        if name in self._vars:
            raise ValueError(f"duplicate variable {name!r}")
        if not (math.isfinite(obj) and (math.isfinite(lb) or lb == -math.inf)
                and (math.isfinite(ub) or ub == math.inf)):
            raise ValueError(f"non-finite data for variable {name!r}")
        self._vars[name] = _Var(len(self._vars), float(lb), float(ub), float(obj), integer)
        return name

    def add_constr(self, coeffs: Dict[str, float], sense: str, rhs: float,
                   name: Optional[str] = None) -> str:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        for var in coeffs:
            if var not in self._vars:
                raise ValueError(f"constraint references unknown variable {var!r}")
        if not all(math.isfinite(v) for v in coeffs.values()) or not math.isfinite(rhs):
            raise ValueError("non-finite constraint data")
        if name is None:
            name = f"c{len(self._constrs)}"
        if name in self._cnames:
            raise ValueError(f"duplicate constraint {name!r}")
        self._cnames.add(name)
        self._constrs.append(_Constr(name, dict(coeffs), sense, float(rhs)))
        return name

    def set_var_bounds(self, name: str, lb: Optional[float] = None, ub: Optional[float] = None):
        var = self._vars[name]
        if lb is not None:
            var.lb = float(lb)
        if ub is not None:
            var.ub = float(ub)

    def set_obj_coeff(self, name: str, obj: float):
        self._vars[name].obj = float(obj)

    @property
    def var_names(self) -> List[str]:
        return list(self._vars)

    def has_integers(self) -> bool:
        return any(v.integer for v in self._vars.values())

    def n_vars(self) -> int:
        return len(self._vars)

    def n_constrs(self) -> int:
        return len(self._constrs)

    # --- matrix assembly -------------------------------------------------

    def _arrays(self):
        nv = len(self._vars)
        c = np.zeros(nv)
        lb = np.zeros(nv)
        ub = np.zeros(nv)
        integrality = np.zeros(nv)
        for v in self._vars.values():
            c[v.index] = -v.obj if self.maximize else v.obj
            lb[v.index] = v.lb
            ub[v.index] = v.ub
            integrality[v.index] = 1.0 if v.integer else 0.0
        return c, lb, ub, integrality

    def _matrix(self) -> Tuple[sparse.csr_matrix, np.ndarray, np.ndarray]:
        """Single constraint matrix with row bounds (lo, hi) for milp."""
        rows, cols, data = [], [], []
        lo = np.empty(len(self._constrs))
        hi = np.empty(len(self._constrs))
        for r, con in enumerate(self._constrs):
            for var, coef in con.coeffs.items():
                rows.append(r)
                cols.append(self._vars[var].index)
                data.append(coef)
            if con.sense == "<=":
                lo[r], hi[r] = -np.inf, con.rhs
            elif con.sense == ">=":
                lo[r], hi[r] = con.rhs, np.inf
            else:
                lo[r], hi[r] = con.rhs, con.rhs
        mat = sparse.csr_matrix(
            (data, (rows, cols)), shape=(len(self._constrs), len(self._vars))
        )
        return mat, lo, hi

    def write_lp(self, path) -> None:
        """CPLEX-LP style dump for debugging."""
        def term(coef, var):
            sign = "+" if coef >= 0 else "-"
            return f"{sign} {abs(coef):.12g} {var}"

        with open(path, "w") as fh:
            fh.write("Maximize\n" if self.maximize else "Minimize\n")
            parts = [term(v.obj, name) for name, v in self._vars.items() if v.obj != 0.0]
            fh.write(" obj: " + (" ".join(parts) if parts else "0 " + next(iter(self._vars), "x")) + "\n")
            fh.write("Subject To\n")
            for con in self._constrs:
                lhs = " ".join(term(coef, var) for var, coef in con.coeffs.items())
                op = {"<=": "<=", ">=": ">=", "==": "="}[con.sense]
                fh.write(f" {con.name}: {lhs} {op} {con.rhs:.12g}\n")
            fh.write("Bounds\n")
            for name, v in self._vars.items():
                lo = "-inf" if v.lb == -math.inf else f"{v.lb:.12g}"
                hi = "+inf" if v.ub == math.inf else f"{v.ub:.12g}"
                fh.write(f" {lo} <= {name} <= {hi}\n")
            ints = [name for name, v in self._vars.items() if v.integer]
            if ints:
                fh.write("General\n " + " ".join(ints) + "\n")
            fh.write("End\n")


@dataclass
class SolveOutcome:
    status: str
    objective: Optional[float]
    values: Optional[Dict[str, float]]
    duals: Optional[Dict[str, float]] = None       # LP only, original orientation
    dual_objective: Optional[float] = None         # LP only
    best_bound: Optional[float] = None             # MIP only
    cut_rounds: int = 0
    cuts_complete: bool = True

    def value(self, name: str) -> float:
        return self.values[name]

    @property
    def solved(self) -> bool:
        return self.status in (OPTIMAL, FEASIBLE) and self.values is not None


_LP_STATUS = {0: OPTIMAL, 1: TIME_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_lp(model: LinearModel, time_limit: Optional[float] = None,
             backend: Optional[str] = None) -> SolveOutcome:
    """Solve the continuous relaxation; integer markings are ignored."""
    resolve_backend(backend)
    c, lb, ub, _ = model._arrays()
    a_eq_rows, b_eq, eq_names = [], [], []
    a_ub_rows, b_ub, ub_names, ub_sign = [], [], [], []
    nv = model.n_vars()
    for con in model._constrs:
        row = np.zeros(nv)
        for var, coef in con.coeffs.items():
            row[model._vars[var].index] = coef
        if con.sense == "==":
            a_eq_rows.append(row)
            b_eq.append(con.rhs)
            eq_names.append(con.name)
        elif con.sense == "<=":
            a_ub_rows.append(row)
            b_ub.append(con.rhs)
            ub_names.append(con.name)
            ub_sign.append(1.0)
        else:  # >= stored negated
            a_ub_rows.append(-row)
            b_ub.append(-con.rhs)
            ub_names.append(con.name)
            ub_sign.append(-1.0)
    options = {"presolve": True}
    if time_limit is not None:
        options["time_limit"] = max(0.01, float(time_limit))
    res = linprog(
        c,
        A_ub=np.vstack(a_ub_rows) if a_ub_rows else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.vstack(a_eq_rows) if a_eq_rows else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(lb, ub)),
        method="highs",
        options=options,
    )
    status = _LP_STATUS.get(res.status, INFEASIBLE)
    if status != OPTIMAL or res.x is None:
        return SolveOutcome(status=status, objective=None, values=None)
    sign = -1.0 if model.maximize else 1.0
    values = {name: float(res.x[v.index]) for name, v in model._vars.items()}
    duals: Optional[Dict[str, float]] = None
    dual_obj: Optional[float] = None
    if not model.maximize:
        duals = {}
        for name, marg in zip(eq_names, res.eqlin.marginals):
            duals[name] = float(marg)
        for name, marg, sgn in zip(ub_names, res.ineqlin.marginals, ub_sign):
            duals[name] = float(marg) * sgn
        dual_obj = float(np.dot(res.eqlin.marginals, b_eq)) if b_eq else 0.0
        if b_ub:
            dual_obj += float(np.dot(res.ineqlin.marginals, b_ub))
        for j in range(nv):
            if math.isfinite(lb[j]):
                dual_obj += float(res.lower.marginals[j]) * lb[j]
            if math.isfinite(ub[j]):
                dual_obj += float(res.upper.marginals[j]) * ub[j]
        dual_obj += model.obj_offset
    return SolveOutcome(
        status=OPTIMAL,
        objective=sign * float(res.fun) + model.obj_offset,
        values=values,
        duals=duals,
        dual_objective=dual_obj,
    )


_MIP_STATUS = {0: OPTIMAL, 1: TIME_LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}


def solve_mip(model: LinearModel, time_limit: Optional[float] = None,
              gap_limit: Optional[float] = None,
              backend: Optional[str] = None) -> SolveOutcome:
    resolve_backend(backend)
    c, lb, ub, integrality = model._arrays()
    constraints = []
    if model.n_constrs():
        mat, lo, hi = model._matrix()
        constraints = [LinearConstraint(mat, lo, hi)]
    options: Dict[str, object] = {
        # engine default leaves a 1e-4 gap; force exactness unless asked otherwise
        "mip_rel_gap": float(gap_limit) if gap_limit is not None else 0.0,
    }
    if time_limit is not None:
        options["time_limit"] = max(0.01, float(time_limit))
    res = milp(
        c,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(lb, ub),
        options=options,
    )
    status = _MIP_STATUS.get(res.status, INFEASIBLE)
    sign = -1.0 if model.maximize else 1.0
    if res.x is None:
        if status == OPTIMAL:
            status = INFEASIBLE
        return SolveOutcome(status=status, objective=None, values=None)
    values = {name: float(res.x[v.index]) for name, v in model._vars.items()}
    bound = None
    if res.mip_dual_bound is not None and math.isfinite(res.mip_dual_bound):
        bound = sign * float(res.mip_dual_bound) + model.obj_offset
    return SolveOutcome(
        status=OPTIMAL if status == OPTIMAL else status,
        objective=sign * float(res.fun) + model.obj_offset,
        values=values,
        best_bound=bound,
    )


CutSource = Callable[[SolveOutcome], Iterable[Tuple[Dict[str, float], str, float]]]


def resolve_with_cuts(model: LinearModel, cut_source: CutSource, max_rounds: int = 50,
                      time_limit: Optional[float] = None,
                      gap_limit: Optional[float] = None,
                      backend: Optional[str] = None) -> SolveOutcome:
    """Solve, separate violated cuts, add them, and solve again.

    Cuts stay in the model across rounds (and after return, for reuse by the
    caller). When the round budget runs out before a separation round comes
    back empty, the outcome is flagged `cuts_complete=False`.
    """
    deadline = None if time_limit is None else time.monotonic() + time_limit

    def remaining() -> Optional[float]:
        if deadline is None:
            return None
        return deadline - time.monotonic()

    out = solve_mip(model, time_limit=remaining(), gap_limit=gap_limit, backend=backend)
    for round_no in range(max_rounds):
        if not out.solved:
            return out
        if out.status == TIME_LIMIT:
            out.cuts_complete = False
            return out
        cuts = list(cut_source(out))
        if not cuts:
            return out
        for coeffs, sense, rhs in cuts:
            model.add_constr(coeffs, sense, rhs)
        left = remaining()
        if left is not None and left <= 0:
            out.status = TIME_LIMIT
            out.cuts_complete = False
            return out
        out = solve_mip(model, time_limit=left, gap_limit=gap_limit, backend=backend)
        out.cut_rounds = round_no + 1
    out.cuts_complete = False
    return out
