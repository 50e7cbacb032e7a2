"""Second-stage assignment problem: primal LP, dual LP, and small oracles.

Given a first-stage plan (which facilities are active and where they sit in
each period) and a demand realization, the recourse assigns demand to open
facilities at cost beta*d per unit-distance and absorbs the remainder as
shortage at cost gamma per unit.  The problem separates over periods, which
the implementation exploits; recourse is complete (u = W is always feasible).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Instance, ScenarioSet
from . import solverapi
from .solverapi import Model, SolverConfig, SolverError


@dataclass
class FirstStagePlan:
    y: np.ndarray  # (M,) 0/1
    x: np.ndarray  # (J, M, T) 0/1

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=int)
        self.x = np.asarray(self.x, dtype=int)

    @property
    def fleet_size(self) -> int:
        return int(self.y.sum())

    def first_stage_cost(self, instance: Instance) -> float:
        c = instance.costs
        return float(c.fleet_cost * self.y.sum() - c.inconvenience_reward * self.x.sum())

    def site_counts(self, t: int) -> np.ndarray:
        """Number of facilities stationed at each site in period t."""
        return self.x[:, :, t].sum(axis=1)

    def to_dict(self) -> dict:
        return {"y": self.y.tolist(), "x": self.x.tolist()}

    @classmethod
    def from_dict(cls, doc: dict) -> "FirstStagePlan":
        return cls(np.asarray(doc["y"]), np.asarray(doc["x"]))


def plan_in_region(plan: FirstStagePlan, instance: Instance) -> bool:
    """Membership test for the feasible first-stage region.

    A facility serves at most one site per period, cannot reappear at
    another site inside the travel window, and must be active to serve.
    """
    J, M, T = instance.J, instance.M, instance.T
    x, y = plan.x, plan.y
    if x.shape != (J, M, T) or y.shape != (M,):
        return False
    trav = instance.network.site_site_travel_periods
    for m in range(M):
        if np.any(x[:, m, :] > y[m]):
            return False
        for t in range(T):
            placed = np.flatnonzero(x[:, m, t])
            if len(placed) > 1:
                return False
            if len(placed) == 1:
                j = placed[0]
                for jp in range(J):
                    if jp == j:
                        continue
                    hi = min(t + trav[j, jp], T - 1)
                    if np.any(x[jp, m, t:hi + 1]):
                        return False
    return True


@dataclass
class RecourseSolution:
    z: np.ndarray  # (I, J, M, T) served amounts
    u: np.ndarray  # (I, T) unmet demand
    cost: float


@dataclass
class RecourseDual:
    lam: np.ndarray  # (I, T)
    v: np.ndarray    # (J, M, T), nonpositive
    objective: float


class RecourseEvaluator:
    """Repeated recourse solves for one fixed plan.

    Builds each period's LP structure once (columns for the open sites,
    merged capacity per site) and re-solves with fresh demand vectors; used
    by oracles and the out-of-sample simulation where thousands of demand
    draws hit the same plan.
    """

    def __init__(self, plan: FirstStagePlan, instance: Instance,
                 config: SolverConfig | None = None):
        self.instance = instance
        self.plan = plan
        self.config = config or SolverConfig()
        self._periods = []
        d = instance.network.customer_site_distance
        beta = instance.costs.assignment_rate
        C = instance.costs.capacity
        for t in range(instance.T):
            counts = plan.site_counts(t)
            sites = np.flatnonzero(counts)
            self._periods.append({
                "sites": sites,
                "cap": C * counts[sites],
                "cost": beta * d[:, sites],  # (I, n_sites)
            })

    def period_value(self, t: int, w_t: np.ndarray, want_duals: bool = False):
        """Optimal cost of serving demand w_t in period t (and duals if asked)."""
        inst = self.instance
        gamma = inst.costs.shortage_penalty
        per = self._periods[t]
        sites, cap, cost = per["sites"], per["cap"], per["cost"]
        I, S = cost.shape
        if S == 0:
            value = float(gamma * np.sum(w_t))
            if want_duals:
                return value, np.full(I, gamma), np.zeros(0), np.zeros((I, 0))
            return value
        m = Model(minimize=True, name=f"recourse_t{t}")
        z = np.array([[m.add_var(0.0, obj=cost[i, s]) for s in range(S)] for i in range(I)])
        u = np.array([m.add_var(0.0, obj=gamma) for _ in range(I)])
        bal_rows = []
        for i in range(I):
            coeffs = [(int(z[i, s]), 1.0) for s in range(S)] + [(int(u[i]), 1.0)]
            bal_rows.append(m.add_row(coeffs, "==", float(w_t[i])))
        cap_rows = []
        for s in range(S):
            cap_rows.append(m.add_row([(int(z[i, s]), 1.0) for i in range(I)], "<=", float(cap[s])))
        out = m.solve(self.config)
        if out.status != solverapi.OPTIMAL:
            raise SolverError(f"recourse LP returned '{out.status}' (complete recourse violated?)")
        if not want_duals:
            return float(out.objective)
        lam = out.duals[bal_rows]
        v_sites = out.duals[cap_rows]
        zsol = out.x[z.reshape(-1)].reshape(I, S)
        return float(out.objective), lam, v_sites, zsol

    def value(self, w: np.ndarray) -> float:
        return sum(self.period_value(t, w[:, t]) for t in range(self.instance.T))


def solve_recourse(plan: FirstStagePlan, w: np.ndarray, instance: Instance,
                   config: SolverConfig | None = None) -> RecourseSolution:
    """Optimal assignment of the demand matrix w under the given plan."""
    w = np.asarray(w, dtype=float)
    ev = RecourseEvaluator(plan, instance, config)
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    z = np.zeros((I, J, M, T))
    u = np.zeros((I, T))
    total = 0.0
    for t in range(T):
        per = ev._periods[t]
        sites = per["sites"]
        if len(sites) == 0:
            u[:, t] = w[:, t]
            total += instance.costs.shortage_penalty * float(np.sum(w[:, t]))
            continue
        value, _lam, _v, zsol = ev.period_value(t, w[:, t], want_duals=True)
        total += value
        # split each site's served amount evenly across the facilities parked there
        for s, j in enumerate(sites):
            ms = np.flatnonzero(plan.x[j, :, t])
            for i in range(I):
                share = zsol[i, s] / len(ms)
                for m in ms:
                    z[i, j, m, t] = share
        u[:, t] = w[:, t] - z[:, :, :, t].sum(axis=(1, 2))
    u = np.maximum(u, 0.0)
    return RecourseSolution(z, u, float(total))


def solve_recourse_dual(plan: FirstStagePlan, w: np.ndarray, instance: Instance,
                        config: SolverConfig | None = None) -> RecourseDual:
    """Dual-optimal (lambda, v) with the deterministic v-completion.

    lambda comes from the demand-balance duals of the primal solve; v is
    completed as v[j][m][t] = min(min_i(beta d[i][j] - lambda[i][t]), 0),
    which is optimal given lambda and makes cut coefficients reproducible.
    """
    w = np.asarray(w, dtype=float)
    ev = RecourseEvaluator(plan, instance, config)
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    beta_d = instance.costs.assignment_rate * instance.network.customer_site_distance
    lam = np.zeros((I, T))
    v = np.zeros((J, M, T))
    primal = 0.0
    for t in range(T):
        value, lam_t, _v_sites, _z = ev.period_value(t, w[:, t], want_duals=True)
        primal += value
        lam[:, t] = lam_t
        v_complete = np.minimum((beta_d - lam_t[:, None]).min(axis=0), 0.0)  # (J,)
        v[:, :, t] = v_complete[:, None]
    C = instance.costs.capacity
    dual_obj = float(np.sum(lam * w) + C * np.sum(plan.x * v))
    return RecourseDual(lam, v, dual_obj)


def recourse_lower_bound(instance: Instance, t: int) -> float:
    """Valid floor on the period-t recourse: cheapest service of the support floor."""
    beta_d = instance.costs.assignment_rate * instance.network.customer_site_distance
    unit = np.minimum(instance.costs.shortage_penalty, beta_d.min(axis=1))
    return float(np.sum(unit * instance.demand.lower[:, t]))


def _region_pairs(instance: Instance):
    """Yield the (j, m, t, jp, tp) tuples of the first-stage pair constraints.

    Same-period pairs are emitted once (j < jp); cross-period pairs are kept
    for both orders since they constrain different variables.
    """
    trav = instance.network.site_site_travel_periods
    J, T, M = instance.J, instance.T, instance.M
    for m in range(M):
        for j in range(J):
            for jp in range(J):
                if jp == j:
                    continue
                for t in range(T):
                    hi = min(t + int(trav[j, jp]), T - 1)
                    for tp in range(t, hi + 1):
                        if tp == t and jp < j:
                            continue
                        yield (j, m, t, jp, tp)


def extensive_form_value(instance: Instance, scenarios: ScenarioSet, *,
                         size_limit: int = 200_000,
                         config: SolverConfig | None = None) -> tuple[float, FirstStagePlan]:
    """Monolithic sample-average MILP; the oracle for decomposition checks.

    Guarded by a variable-count limit since the scenario-indexed assignment
    block grows as N*I*J*M*T.
    """
    I, J, M, T, N = instance.I, instance.J, instance.M, instance.T, scenarios.N
    nz = N * I * J * M * T
    if nz > size_limit:
        raise ValueError(f"extensive form too large ({nz} assignment variables > {size_limit})")
    cfg = config or SolverConfig()
    c = instance.costs
    beta_d = c.assignment_rate * instance.network.customer_site_distance
    w = scenarios.samples

    m = Model(minimize=True, name="extensive_saa")
    y = np.array([m.add_binary(obj=c.fleet_cost) for _ in range(M)])
    x = np.array([[[m.add_binary(obj=-c.inconvenience_reward) for _ in range(T)]
                   for _ in range(M)] for _ in range(J)])
    z = np.array([[[[[m.add_var(0.0, obj=beta_d[i, j] / N) for _t in range(T)]
                     for _m in range(M)] for j in range(J)] for i in range(I)]
                  for _n in range(N)])
    u = np.array([[[m.add_var(0.0, obj=c.shortage_penalty / N) for _ in range(T)]
                   for _ in range(I)] for _ in range(N)])

    for (j, mm, t, jp, tp) in _region_pairs(instance):
        m.add_row([(int(x[j, mm, t]), 1.0), (int(x[jp, mm, tp]), 1.0), (int(y[mm]), -1.0)], "<=", 0.0)
    if J == 1:
        for mm in range(M):
            for t in range(T):
                m.add_row([(int(x[0, mm, t]), 1.0), (int(y[mm]), -1.0)], "<=", 0.0)

    for n in range(N):
        for i in range(I):
            for t in range(T):
                coeffs = [(int(z[n, i, j, mm, t]), 1.0) for j in range(J) for mm in range(M)]
                coeffs.append((int(u[n, i, t]), 1.0))
                m.add_row(coeffs, "==", float(w[n, i, t]))
        for j in range(J):
            for mm in range(M):
                for t in range(T):
                    coeffs = [(int(z[n, i, j, mm, t]), 1.0) for i in range(I)]
                    coeffs.append((int(x[j, mm, t]), -c.capacity))
                    m.add_row(coeffs, "<=", 0.0)

    out = m.solve(cfg).require_optimal("extensive form")
    plan = FirstStagePlan(np.rint(out.x[y]).astype(int),
                          np.rint(out.x[x.reshape(-1)]).reshape(J, M, T).astype(int))
    return float(out.objective), plan
