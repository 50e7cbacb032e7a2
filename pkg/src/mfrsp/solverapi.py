"""Backend-neutral layer for linear and mixed-binary programs.

Everything else in the package builds models against this interface; nothing
imports scipy.optimize directly.  HiGHS (shipped with scipy) is the single
backend.  It covers exactly what the decomposition needs: continuous and
binary variables, sparse rows, LP duals, a relative MIP gap and a time limit.

Dual values are reported as shadow prices dObj/dRHS in the caller's row
order, regardless of row sense.  Mixed-binary solves return no duals.
"""

from __future__ import annotations

import math
import os
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import Bounds, LinearConstraint, linprog, milp

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"
LIMIT = "limit"

_LP_STATUS = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}
_MILP_STATUS = {0: OPTIMAL, 1: LIMIT, 2: INFEASIBLE, 3: UNBOUNDED}

_SENSES = ("<=", ">=", "==")


class SolverError(RuntimeError):
    """Backend failure (numerical trouble or an unexpected status)."""


def default_threads() -> int:
    """Thread budget for work pools, overridable via MFRSP_SOLVER_THREADS."""
    env = os.environ.get("MFRSP_SOLVER_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


@dataclass
class SolverConfig:
    """Single funnel for every numerical tolerance used by the models.

    rel_tol / abs_tol go to the LP feasibility tolerances; mip_gap is the
    relative gap for mixed-binary solves (0 = proven optimality, which cut
    validity relies on).  threads is recorded for manifests; the scipy HiGHS
    interface itself runs single-threaded, which keeps solves deterministic.
    """

    rel_tol: float = 1e-6
    abs_tol: float = 1e-9
    mip_gap: float = 0.0
    time_limit: float | None = None
    threads: int = field(default_factory=default_threads)


@dataclass
class SolveOutcome:
    status: str
    objective: float | None
    x: np.ndarray | None
    duals: np.ndarray | None
    solve_time: float

    def require_optimal(self, what: str = "solve") -> "SolveOutcome":
        if self.status != OPTIMAL:
            raise SolverError(f"{what}: expected optimal, got status '{self.status}'")
        return self


class Model:
    """A sparse LP/MILP assembled row by row.

    Variable and row ids are dense integers, stable once created.  Rows are
    (coeffs, sense, rhs) with sense one of '<=', '>=', '=='.
    """

    def __init__(self, minimize: bool = True, name: str = ""):
        self.minimize = minimize
        self.name = name
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._obj: list[float] = []
        self._int: list[bool] = []
        self._vnames: list[str] = []
        # rows as parallel lists of (var_ids, coefs) plus sense/rhs
        self._row_vars: list[np.ndarray] = []
        self._row_coefs: list[np.ndarray] = []
        self._row_sense: list[str] = []
        self._row_rhs: list[float] = []
        self._row_names: list[str] = []

    # -- construction -----------------------------------------------------
    def add_var(self, lb: float = 0.0, ub: float = math.inf, obj: float = 0.0,
                integer: bool = False, name: str | None = None) -> int:
        idx = len(self._lb)
        self._lb.append(float(lb))
        self._ub.append(float(ub))
        self._obj.append(float(obj))
        self._int.append(bool(integer))
        self._vnames.append(name or f"v{idx}")
        return idx

    def add_binary(self, obj: float = 0.0, name: str | None = None) -> int:
        return self.add_var(0.0, 1.0, obj, integer=True, name=name)

    def add_row(self, coeffs, sense: str, rhs: float, name: str | None = None) -> int:
        if sense not in _SENSES:
            raise ValueError(f"bad sense {sense!r}")
        if isinstance(coeffs, dict):
            items = list(coeffs.items())
        else:
            items = list(coeffs)
        n = len(self._lb)
        var_ids = np.fromiter((int(v) for v, _ in items), dtype=np.int64, count=len(items))
        coefs = np.fromiter((float(c) for _, c in items), dtype=np.float64, count=len(items))
        if len(var_ids) and (var_ids.min() < 0 or var_ids.max() >= n):
            raise ValueError("row references unknown variable id")
        ridx = len(self._row_sense)
        self._row_vars.append(var_ids)
        self._row_coefs.append(coefs)
        self._row_sense.append(sense)
        self._row_rhs.append(float(rhs))
        self._row_names.append(name or f"c{ridx}")
        return ridx

    def set_obj(self, var: int, coef: float) -> None:
        self._obj[var] = float(coef)

    def fix_var(self, var: int, value: float) -> None:
        self._lb[var] = float(value)
        self._ub[var] = float(value)

    @property
    def num_vars(self) -> int:
        return len(self._lb)

    @property
    def num_rows(self) -> int:
        return len(self._row_sense)

    @property
    def has_integers(self) -> bool:
        return any(self._int)

    # -- solving ----------------------------------------------------------
    def _assemble(self):
        nrows, nvars = len(self._row_sense), len(self._lb)
        if nrows:
            counts = np.fromiter((len(v) for v in self._row_vars), dtype=np.int64, count=nrows)
            rows = np.repeat(np.arange(nrows, dtype=np.int64), counts)
            cols = np.concatenate(self._row_vars) if counts.sum() else np.empty(0, dtype=np.int64)
            vals = np.concatenate(self._row_coefs) if counts.sum() else np.empty(0)
            a = sp.coo_matrix((vals, (rows, cols)), shape=(nrows, nvars)).tocsr()
        else:
            a = sp.csr_matrix((0, nvars))
        return a

    def solve(self, config: SolverConfig | None = None) -> SolveOutcome:
        config = config or SolverConfig()
        t0 = time.perf_counter()
        out = self._solve_milp(config) if self.has_integers else self._solve_lp(config)
        out.solve_time = time.perf_counter() - t0
        return out

    def _obj_vector(self) -> np.ndarray:
        c = np.asarray(self._obj, dtype=np.float64)
        return c if self.minimize else -c

    def _finish_objective(self, fun: float | None) -> float | None:
        if fun is None:
            return None
        return fun if self.minimize else -fun

    def _solve_lp(self, config: SolverConfig) -> SolveOutcome:
        a = self._assemble()
        sense = np.array(self._row_sense)
        rhs = np.asarray(self._row_rhs, dtype=np.float64)
        eq = sense == "=="
        le = sense == "<="
        ge = sense == ">="
        a_eq = a[eq] if eq.any() else None
        b_eq = rhs[eq] if eq.any() else None
        # assemble <= block: keep <= rows, negate >= rows
        ub_parts, ub_rhs = [], []
        if le.any():
            ub_parts.append(a[le])
            ub_rhs.append(rhs[le])
        if ge.any():
            ub_parts.append(-a[ge])
            ub_rhs.append(-rhs[ge])
        a_ub = sp.vstack(ub_parts).tocsr() if ub_parts else None
        b_ub = np.concatenate(ub_rhs) if ub_rhs else None
        bounds = [(lo if lo > -math.inf else None, hi if hi < math.inf else None)
                  for lo, hi in zip(self._lb, self._ub)]
        options = {
            "presolve": True,
            "primal_feasibility_tolerance": max(config.abs_tol, 1e-10),
            "dual_feasibility_tolerance": max(config.abs_tol, 1e-10),
        }
        if config.time_limit is not None:
            options["time_limit"] = config.time_limit
        res = linprog(self._obj_vector(), A_ub=a_ub, b_ub=b_ub, A_eq=a_eq, b_eq=b_eq,
                      bounds=bounds, method="highs", options=options)
        status = _LP_STATUS.get(res.status)
        if status is None:
            raise SolverError(f"LP backend failure: {res.message}")
        duals = None
        if status == OPTIMAL:
            duals = np.zeros(len(sense))
            if eq.any():
                duals[eq] = res.eqlin.marginals
            marg = res.ineqlin.marginals if (le.any() or ge.any()) else np.empty(0)
            n_le = int(le.sum())
            if le.any():
                duals[le] = marg[:n_le]
            if ge.any():
                duals[ge] = -marg[n_le:]
        x = np.asarray(res.x) if res.x is not None else None
        return SolveOutcome(status, self._finish_objective(res.fun), x, duals, 0.0)

    def _solve_milp(self, config: SolverConfig) -> SolveOutcome:
        a = self._assemble()
        lo = np.full(len(self._row_sense), -np.inf)
        hi = np.full(len(self._row_sense), np.inf)
        rhs = np.asarray(self._row_rhs, dtype=np.float64)
        for i, s in enumerate(self._row_sense):
            if s == "<=":
                hi[i] = rhs[i]
            elif s == ">=":
                lo[i] = rhs[i]
            else:
                lo[i] = hi[i] = rhs[i]
        constraints = LinearConstraint(a, lo, hi) if len(self._row_sense) else None
        integrality = np.asarray(self._int, dtype=np.int64)
        bounds = Bounds(np.asarray(self._lb), np.asarray(self._ub))
        options = {"mip_rel_gap": config.mip_gap, "presolve": True}
        if config.time_limit is not None:
            options["time_limit"] = config.time_limit
        res = milp(c=self._obj_vector(), constraints=constraints,
                   integrality=integrality, bounds=bounds, options=options)
        status = _MILP_STATUS.get(res.status)
        if status is None:
            raise SolverError(f"MILP backend failure: {res.message}")
        x = np.asarray(res.x) if res.x is not None else None
        fun = res.fun if res.fun is not None else None
        return SolveOutcome(status, self._finish_objective(fun), x, None, 0.0)

    # -- debugging --------------------------------------------------------
    def to_lp_string(self) -> str:
        """Render the model in CPLEX LP text format (debugging aid)."""
        def term(coef, name, first):
            sign = "-" if coef < 0 else ("" if first else "+")
            return f" {sign} {abs(coef):.12g} {name}".replace("  ", " ")

        lines = [f"\\ {self.name or 'model'}"]
        lines.append("Minimize" if self.minimize else "Maximize")
        obj_terms = [(c, self._vnames[i]) for i, c in enumerate(self._obj) if c != 0.0]
        body = ""
        for k, (c, nm) in enumerate(obj_terms):
            body += term(c, nm, k == 0)
        lines.append(" obj:" + (body or " 0 " + (self._vnames[0] if self._vnames else "x")))
        lines.append("Subject To")
        op = {"<=": "<=", ">=": ">=", "==": "="}
        for r in range(len(self._row_sense)):
            body = ""
            for k, (v, c) in enumerate(zip(self._row_vars[r], self._row_coefs[r])):
                body += term(c, self._vnames[v], k == 0)
            lines.append(f" {self._row_names[r]}:{body} {op[self._row_sense[r]]} {self._row_rhs[r]:.12g}")
        lines.append("Bounds")
        for i, (lo, hi) in enumerate(zip(self._lb, self._ub)):
            lo_s = "-inf" if lo == -math.inf else f"{lo:.12g}"
            hi_s = "+inf" if hi == math.inf else f"{hi:.12g}"
            lines.append(f" {lo_s} <= {self._vnames[i]} <= {hi_s}")
        generals = [self._vnames[i] for i, isint in enumerate(self._int) if isint]
        if generals:
            lines.append("General")
            lines.append(" " + " ".join(generals))
        lines.append("End")
        return "\n".join(lines) + "\n"

    def write_lp(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_lp_string())
