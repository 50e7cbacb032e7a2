"""Master problems for every (ambiguity x risk) combination.

The first stage picks a fleet and a site schedule inside the feasible region
(the pair constraints that keep a moving facility out of service during
travel).  The second-stage worst case is approximated from below by an
epigraph: one variable per period for the moment-based model, one per
(scenario, period) for the sample-based models, or a single aggregated
variable in single-cut mode.  Cuts, seed inequalities, per-period lower
bounds and symmetry breaking all land here.

Dual-variable naming: the moment model's vector duals are ``rho``/``psi``;
the Wasserstein multiplier is the scalar ``rho_w``.  The two never coexist
in one master, but distinct names prevent aliasing in the cut machinery.
``rho_w`` is bounded by the shortage penalty: the recourse is
gamma-Lipschitz in the demand under the l1 norm, so larger multipliers
never help; this also keeps the radius-zero reduction to the sample
average exact.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import SAA, MAD, Expectation, MeanCVaR, Wasserstein
from .instance import Instance
from .recourse import FirstStagePlan, recourse_lower_bound, _region_pairs
from .solverapi import Model, SolverConfig

log = logging.getLogger(__name__)

SINGLE_KEY = "all"


@dataclass
class MasterOptions:
    multi_cut: bool = True
    lb_inequalities: bool = True
    symmetry_breaking: bool = True
    export_lp: str | None = None


@dataclass
class Cut:
    """One optimality cut: delta_key >= const + sum(coef * master variable)."""
    key: object
    const: float
    x_coeffs: dict = field(default_factory=dict)       # (j, m, t) -> coef
    rho_coeffs: dict = field(default_factory=dict)     # (i, t) -> coef
    psi_coeffs: dict = field(default_factory=dict)     # (i, t) -> coef
    rho_w_coef: float = 0.0
    iteration: int = 0
    activity: int = 0

    def rhs_at(self, sol: "MasterSolution") -> float:
        val = self.const
        for (j, m, t), c in self.x_coeffs.items():
            val += c * sol.x[j, m, t]
        if self.rho_coeffs:
            for (i, t), c in self.rho_coeffs.items():
                val += c * sol.rho[i, t]
        if self.psi_coeffs:
            for (i, t), c in self.psi_coeffs.items():
                val += c * sol.psi[i, t]
        if self.rho_w_coef:
            val += self.rho_w_coef * sol.rho_w
        return val


@dataclass
class MasterSolution:
    objective: float
    y: np.ndarray
    x: np.ndarray
    delta: dict
    rho: np.ndarray | None = None
    psi: np.ndarray | None = None
    rho_w: float = 0.0
    theta: float = 0.0
    zeta: float = 0.0

    @property
    def plan(self) -> FirstStagePlan:
        return FirstStagePlan(self.y, self.x)


def build_region_x(model: Model, instance: Instance, x_idx: np.ndarray,
                   y_idx: np.ndarray) -> int:
    """Emit the first-stage pair constraints; returns the row count.

    For every facility, site pair j != j', period t and t' inside the travel
    window, x[j][m][t] + x[j'][m][t'] <= y[m].  Duplicate same-period pairs
    are emitted once.  A single-site network degenerates to x <= y.
    """
    count = 0
    for (j, m, t, jp, tp) in _region_pairs(instance):
        model.add_row([(int(x_idx[j, m, t]), 1.0), (int(x_idx[jp, m, tp]), 1.0),
                       (int(y_idx[m]), -1.0)], "<=", 0.0)
        count += 1
    if instance.J == 1:
        for m in range(instance.M):
            for t in range(instance.T):
                model.add_row([(int(x_idx[0, m, t]), 1.0), (int(y_idx[m]), -1.0)], "<=", 0.0)
                count += 1
    # clique strengthening: one site per facility-period; implied by the
    # pair family at integer points but much tighter in the relaxation
    if instance.J > 1:
        for m in range(instance.M):
            for t in range(instance.T):
                coeffs = [(int(x_idx[j, m, t]), 1.0) for j in range(instance.J)]
                coeffs.append((int(y_idx[m]), -1.0))
                model.add_row(coeffs, "<=", 0.0)
    return count


def build_symmetry_breaking(model: Model, instance: Instance, x_idx: np.ndarray,
                            y_idx: np.ndarray) -> dict:
    """Order the fleet and the first-period placements.

    Facilities are numbered so that y[m+1] <= y[m]; a dummy location absorbs
    facilities without a first-period site, and each facility's first-period
    site index is nondecreasing in the facility number.
    """
    J, M = instance.J, instance.M
    ordering_rows = []
    for m in range(M - 1):
        ordering_rows.append(model.add_row([(int(y_idx[m + 1]), 1.0), (int(y_idx[m]), -1.0)], "<=", 0.0))
    dummy = np.array([model.add_var(0.0, 1.0, name=f"xdummy_m{m}") for m in range(M)])
    for m in range(M):
        coeffs = [(int(dummy[m]), 1.0)] + [(int(x_idx[j, m, 0]), 1.0) for j in range(J)]
        model.add_row(coeffs, "==", 1.0)
    placement_rows = []
    for m in range(M - 1):
        for j in range(J):
            coeffs = [(int(x_idx[j, m, 0]), 1.0)]
            coeffs += [(int(x_idx[jp, m + 1, 0]), -1.0) for jp in range(j, J)]
            coeffs.append((int(dummy[m + 1]), -1.0))
            placement_rows.append(model.add_row(coeffs, "<=", 0.0))
    return {"ordering_rows": ordering_rows, "dummy_vars": dummy,
            "placement_rows": placement_rows}


class MasterModel:
    """First-stage model plus the epigraph machinery for one model variant.

    kind is 'saa', 'mad' or 'wasserstein'; risk is Expectation or MeanCVaR.
    Epigraph keys are period indices t (moment model), (scenario, period)
    pairs (sample models), or the single aggregate key in single-cut mode.
    """

    def __init__(self, instance: Instance, ambiguity, risk, options: MasterOptions,
                 fixed_plan: FirstStagePlan | None = None):
        self.instance = instance
        self.ambiguity = ambiguity
        self.risk = risk if risk is not None else Expectation()
        self.options = options
        self.theta_weight = 1.0 if isinstance(self.risk, Expectation) else self.risk.theta
        if isinstance(ambiguity, SAA):
            self.kind = "saa"
            self.scenarios = ambiguity.scenarios
        elif isinstance(ambiguity, MAD):
            self.kind = "mad"
            self.demand = ambiguity.resolve(instance)
            self.scenarios = None
        elif isinstance(ambiguity, Wasserstein):
            self.kind = "wasserstein"
            self.scenarios = ambiguity.scenarios
            self.epsilon = ambiguity.epsilon
        else:
            raise TypeError(f"unknown ambiguity spec {ambiguity!r}")
        self._build(fixed_plan)
        if options.export_lp:
            self.model.write_lp(options.export_lp)

    # -- construction ------------------------------------------------------
    def _risk_coef(self) -> tuple[float, float]:
        """(coefficient on the expectation moments, coefficient on theta)."""
        if isinstance(self.risk, Expectation):
            return 1.0, 0.0
        th, ka = self.risk.theta, self.risk.kappa
        return th + (1.0 - th) / (1.0 - ka), (1.0 - th) * ka / (1.0 - ka)

    def _build(self, fixed_plan):
        inst = self.instance
        I, J, M, T = inst.I, inst.J, inst.M, inst.T
        c = inst.costs
        m = Model(minimize=True, name=f"master_{self.kind}")
        self.model = m
        self.y = np.array([m.add_binary(obj=c.fleet_cost, name=f"y_{mm}") for mm in range(M)])
        self.x = np.array([[[m.add_binary(obj=-c.inconvenience_reward, name=f"x_{j}_{mm}_{t}")
                             for t in range(T)] for mm in range(M)] for j in range(J)])
        build_region_x(m, inst, self.x, self.y)
        if self.options.symmetry_breaking and fixed_plan is None:
            build_symmetry_breaking(m, inst, self.x, self.y)
        if fixed_plan is not None:
            for mm in range(M):
                m.fix_var(int(self.y[mm]), float(fixed_plan.y[mm]))
            for j in range(J):
                for mm in range(M):
                    for t in range(T):
                        m.fix_var(int(self.x[j, mm, t]), float(fixed_plan.x[j, mm, t]))

        lb_t = [recourse_lower_bound(inst, t) for t in range(T)]
        self.rho = self.psi = None
        self.rho_w_var = self.theta_var = self.zeta_var = None
        cvar = isinstance(self.risk, MeanCVaR)

        if self.kind == "mad":
            mom_coef, theta_coef = self._risk_coef()
            mu, eta = self.demand.mean, self.demand.mad
            # the recourse is gamma-Lipschitz in each demand cell, so the
            # moment duals never need to leave [-gamma, gamma] (mean price)
            # and [0, 2 gamma] (deviation price); the boxes kill the
            # degenerate flat directions without touching the optimum
            gam = c.shortage_penalty
            self.rho = np.array([[m.add_var(-gam, gam, obj=mom_coef * mu[i, t],
                                            name=f"rho_{i}_{t}") for t in range(T)] for i in range(I)])
            self.psi = np.array([[m.add_var(0.0, 2.0 * gam, obj=mom_coef * eta[i, t],
                                            name=f"psi_{i}_{t}") for t in range(T)] for i in range(I)])
            if cvar:
                self._build_cvar_moment_block(theta_coef)
            keys = list(range(T)) if self.options.multi_cut else [SINGLE_KEY]
            self.delta = {k: m.add_var(-np.inf, np.inf, obj=1.0, name=f"delta_{k}") for k in keys}
            # seed: the subproblem point (lambda=v=pi=0, W=mean, deviation=0)
            # is always feasible, so delta_t >= -sum_i mu*rho is a valid cut
            # and keeps the first master bounded.
            if self.options.multi_cut:
                for t in range(T):
                    coeffs = [(int(self.delta[t]), 1.0)]
                    coeffs += [(int(self.rho[i, t]), mu[i, t]) for i in range(I)]
                    m.add_row(coeffs, ">=", 0.0)
                    if self.options.lb_inequalities:
                        row = [(int(self.delta[t]), 1.0)]
                        row += [(int(self.rho[i, t]), mu[i, t]) for i in range(I)]
                        row += [(int(self.psi[i, t]), eta[i, t]) for i in range(I)]
                        m.add_row(row, ">=", lb_t[t])
            else:
                coeffs = [(int(self.delta[SINGLE_KEY]), 1.0)]
                coeffs += [(int(self.rho[i, t]), mu[i, t]) for i in range(I) for t in range(T)]
                m.add_row(coeffs, ">=", 0.0)
                if self.options.lb_inequalities:
                    row = [(int(self.delta[SINGLE_KEY]), 1.0)]
                    row += [(int(self.rho[i, t]), mu[i, t]) for i in range(I) for t in range(T)]
                    row += [(int(self.psi[i, t]), eta[i, t]) for i in range(I) for t in range(T)]
                    m.add_row(row, ">=", sum(lb_t))
        else:
            N = self.scenarios.N
            weight = 1.0 / N
            if self.kind == "wasserstein":
                eps_coef, _ = self._risk_coef()
                self.rho_w_var = m.add_var(0.0, c.shortage_penalty,
                                           obj=eps_coef * self.epsilon, name="rho_w")
            delta_obj = self.theta_weight * weight
            if self.options.multi_cut:
                keys = [(n, t) for n in range(N) for t in range(T)]
                self.delta = {}
                for (n, t) in keys:
                    lb = max(0.0, lb_t[t]) if self.options.lb_inequalities else 0.0
                    self.delta[(n, t)] = m.add_var(lb, np.inf, obj=delta_obj,
                                                   name=f"delta_{n}_{t}")
            else:
                lb = N * sum(lb_t) if self.options.lb_inequalities else 0.0
                self.delta = {SINGLE_KEY: m.add_var(max(0.0, lb), np.inf, obj=delta_obj,
                                                    name="delta_all")}
            if cvar:
                self._build_cvar_scenario_block()

    def _build_cvar_moment_block(self, theta_coef: float):
        """theta plus the box-minimization duals linking it to (rho, psi)."""
        inst, m = self.instance, self.model
        I, T = inst.I, inst.T
        dem = self.demand
        self.theta_var = m.add_var(-np.inf, np.inf, obj=theta_coef, name="theta")
        a = np.array([[m.add_var(-np.inf, 0.0, name=f"cva_{i}_{t}") for t in range(T)] for i in range(I)])
        b = np.array([[m.add_var(0.0, np.inf, name=f"cvb_{i}_{t}") for t in range(T)] for i in range(I)])
        g = np.array([[m.add_var(0.0, np.inf, name=f"cvg_{i}_{t}") for t in range(T)] for i in range(I)])
        o = np.array([[m.add_var(0.0, np.inf, name=f"cvo_{i}_{t}") for t in range(T)] for i in range(I)])
        self._cvar_duals = (a, b, g, o)
        coeffs = [(int(self.theta_var), 1.0)]
        for i in range(I):
            for t in range(T):
                coeffs += [(int(a[i, t]), float(dem.upper[i, t])),
                           (int(b[i, t]), float(dem.lower[i, t])),
                           (int(g[i, t]), -float(dem.mean[i, t])),
                           (int(o[i, t]), float(dem.mean[i, t]))]
        m.add_row(coeffs, ">=", 0.0)
        for i in range(I):
            for t in range(T):
                m.add_row([(int(a[i, t]), 1.0), (int(b[i, t]), 1.0), (int(g[i, t]), -1.0),
                           (int(o[i, t]), 1.0), (int(self.rho[i, t]), -1.0)], "<=", 0.0)
                m.add_row([(int(g[i, t]), 1.0), (int(o[i, t]), 1.0),
                           (int(self.psi[i, t]), -1.0)], "<=", 0.0)

    def _build_cvar_scenario_block(self):
        """zeta plus per-scenario excess variables for the sample-based models."""
        m = self.model
        N = self.scenarios.N
        th, ka = self.risk.theta, self.risk.kappa
        tail_coef = (1.0 - th) / ((1.0 - ka) * N)
        self.zeta_var = m.add_var(-np.inf, np.inf, obj=(1.0 - th), name="zeta")
        self.excess = np.array([m.add_var(0.0, np.inf, obj=tail_coef, name=f"excess_{n}")
                                for n in range(N)])
        T = self.instance.T
        for n in range(N):
            if self.options.multi_cut:
                coeffs = [(int(self.excess[n]), 1.0), (int(self.zeta_var), 1.0)]
                coeffs += [(int(self.delta[(n, t)]), -1.0) for t in range(T)]
            else:
                raise ValueError("mean-CVaR with sample ambiguity requires multi_cut "
                                 "(per-scenario epigraphs)")
            m.add_row(coeffs, ">=", 0.0)

    # -- epigraph bookkeeping ----------------------------------------------
    @property
    def epigraph_keys(self) -> list:
        return list(self.delta.keys())

    def delta_weight(self, key) -> float:
        return self.model._obj[self.delta[key]]

    def add_cut(self, cut: Cut) -> int:
        coeffs = [(int(self.delta[cut.key]), 1.0)]
        for (j, m, t), coef in cut.x_coeffs.items():
            if coef:
                coeffs.append((int(self.x[j, m, t]), -coef))
        for (i, t), coef in cut.rho_coeffs.items():
            if coef:
                coeffs.append((int(self.rho[i, t]), -coef))
        for (i, t), coef in cut.psi_coeffs.items():
            if coef:
                coeffs.append((int(self.psi[i, t]), -coef))
        if cut.rho_w_coef:
            coeffs.append((int(self.rho_w_var), -cut.rho_w_coef))
        return self.model.add_row(coeffs, ">=", cut.const)

    # -- solving -----------------------------------------------------------
    def solve(self, config: SolverConfig | None = None) -> MasterSolution:
        out = self.model.solve(config or SolverConfig()).require_optimal("master problem")
        inst = self.instance
        J, M, T = inst.J, inst.M, inst.T
        xsol = out.x
        sol = MasterSolution(
            objective=float(out.objective),
            y=np.rint(xsol[self.y]).astype(int),
            x=np.rint(xsol[self.x.reshape(-1)]).reshape(J, M, T).astype(int),
            delta={k: float(xsol[v]) for k, v in self.delta.items()},
        )
        if self.rho is not None:
            I = inst.I
            sol.rho = xsol[self.rho.reshape(-1)].reshape(I, T)
            sol.psi = xsol[self.psi.reshape(-1)].reshape(I, T)
        if self.rho_w_var is not None:
            sol.rho_w = float(xsol[self.rho_w_var])
        if self.theta_var is not None:
            sol.theta = float(xsol[self.theta_var])
        if self.zeta_var is not None:
            sol.zeta = float(xsol[self.zeta_var])
        return sol

    # -- incumbent value ----------------------------------------------------
    def scenario_totals(self, h: dict) -> np.ndarray:
        N, T = self.scenarios.N, self.instance.T
        return np.array([sum(h[(n, t)] for t in range(T)) for n in range(N)])

    def incumbent_objective(self, sol: MasterSolution, h: dict) -> float:
        """True model objective of the incumbent plan given exact subproblem values.

        For the moment-based masters this is the familiar update
        UB = h* + (LB - delta*); the sample-based mean-CVaR masters recompute
        the zeta-minimization over the exact per-scenario values instead.
        """
        inst = self.instance
        c = inst.costs
        base = float(c.fleet_cost * sol.y.sum() - c.inconvenience_reward * sol.x.sum())
        if self.kind == "mad":
            mom = float(np.sum(self.demand.mean * sol.rho) + np.sum(self.demand.mad * sol.psi))
            h_total = sum(h.values())
            if isinstance(self.risk, Expectation):
                return base + mom + h_total
            mom_coef, theta_coef = self._risk_coef()
            return base + mom_coef * mom + theta_coef * sol.theta + h_total
        totals = self.scenario_totals(h)
        N = self.scenarios.N
        if self.kind == "saa":
            mean_part = float(totals.mean())
            if isinstance(self.risk, Expectation):
                return base + mean_part
            return base + self.risk.theta * mean_part + (1.0 - self.risk.theta) * _cvar_of(totals, self.risk.kappa)
        # wasserstein
        eps_rho = self.epsilon * sol.rho_w
        mean_part = eps_rho + float(totals.mean())
        if isinstance(self.risk, Expectation):
            return base + mean_part
        th, ka = self.risk.theta, self.risk.kappa
        best_tail = np.inf
        for zeta in totals:
            tail = zeta + (eps_rho + float(np.maximum(totals - zeta, 0.0).mean())) / (1.0 - ka)
            best_tail = min(best_tail, tail)
        return base + th * mean_part + (1.0 - th) * float(best_tail)


def _cvar_of(values: np.ndarray, kappa: float) -> float:
    best = np.inf
    for zeta in values:
        best = min(best, zeta + float(np.maximum(values - zeta, 0.0).mean()) / (1.0 - kappa))
    return float(best)


def build_master(instance: Instance, ambiguity, risk=None, options: MasterOptions | None = None,
                 fixed_plan: FirstStagePlan | None = None) -> MasterModel:
    """Assemble the master problem for one (ambiguity, risk) combination.

    SAA covers the sample-average model (Benders master); MAD and
    Wasserstein cover the two robust models; combining either with MeanCVaR
    gives the risk-averse variants.  The Wasserstein mean-CVaR master is
    built by the same pattern as the moment-based one, with the scalar
    transport multiplier shared between the expectation and tail terms.
    """
    options = options or MasterOptions()
    if isinstance(risk, MeanCVaR) and isinstance(ambiguity, (SAA, Wasserstein)) and not options.multi_cut:
        log.info("mean-CVaR with sample ambiguity forces multi-cut epigraphs")
        options = MasterOptions(multi_cut=True, lb_inequalities=options.lb_inequalities,
                                symmetry_breaking=options.symmetry_breaking,
                                export_lp=options.export_lp)
    return MasterModel(instance, ambiguity, risk, options, fixed_plan)
