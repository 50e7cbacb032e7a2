"""Outer cutting-plane loop: master solve, separation, bounds, convergence.

One iteration solves the master to proven optimality (its value is the lower
bound), separates the worst case at the master point, updates the upper
bound with the incumbent's exact objective, and either stops (every epigraph
variable already dominates its subproblem value) or adds the violated cuts
and repeats.  The cut pool only grows.  The same loop serves the moment,
Wasserstein and sample-average models, with or without the mean-CVaR risk
blend, and also re-evaluates a fixed plan by fixing the first stage.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .ambiguity import SAA, MAD, Expectation, MeanCVaR, Wasserstein, empirical_mean_cvar
from .instance import Instance
from .models import SINGLE_KEY, Cut, MasterModel, MasterOptions, MasterSolution, build_master
from .recourse import FirstStagePlan, RecourseEvaluator, plan_in_region
from .separation import extract_cuts, separate_mad, separate_saa, separate_wasserstein
from .solverapi import SolverConfig, SolverError

log = logging.getLogger(__name__)

OPTIMAL = "Optimal"
ITERATION_CAP = "IterationCap"
TIME_LIMIT = "TimeLimit"


@dataclass
class SolveOptions:
    rel_tol: float = 1e-6
    time_limit: float = 3600.0
    max_iterations: int = 10_000
    multi_cut: bool = True
    lb_inequalities: bool = True
    symmetry_breaking: bool = True
    threads: int = 1
    inexact_master: bool = False   # experimentation mode; forfeits the Optimal status
    solver: SolverConfig = field(default_factory=SolverConfig)
    export_lp: str | None = None

    def master_options(self) -> MasterOptions:
        return MasterOptions(multi_cut=self.multi_cut,
                             lb_inequalities=self.lb_inequalities,
                             symmetry_breaking=self.symmetry_breaking,
                             export_lp=self.export_lp)


@dataclass
class CutPool:
    cuts: list[Cut] = field(default_factory=list)

    def add(self, cut: Cut) -> None:
        self.cuts.append(cut)

    def __len__(self) -> int:
        return len(self.cuts)

    def update_activity(self, sol: MasterSolution, tol: float) -> None:
        for cut in self.cuts:
            if sol.delta[cut.key] - cut.rhs_at(sol) <= tol * (1.0 + abs(sol.delta[cut.key])):
                cut.activity += 1


@dataclass
class IterationRecord:
    iteration: int
    lb: float
    ub: float
    gap: float
    master_time: float
    separation_time: float
    cuts_added: int
    cuts_total: int


@dataclass
class DecompositionTrace:
    records: list[IterationRecord] = field(default_factory=list)
    status: str = ITERATION_CAP
    total_time: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.records)

    @property
    def lb(self) -> float:
        return self.records[-1].lb if self.records else -np.inf

    @property
    def ub(self) -> float:
        return min((r.ub for r in self.records), default=np.inf)

    def to_csv(self, path, zero_times: bool = False) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "lb", "ub", "gap", "master_time",
                        "separation_time", "cuts_added", "cuts_total"])
            for r in self.records:
                mt = 0.0 if zero_times else r.master_time
                st = 0.0 if zero_times else r.separation_time
                w.writerow([r.iteration, repr(r.lb), repr(r.ub), repr(r.gap),
                            repr(mt), repr(st), r.cuts_added, r.cuts_total])


def _separate(master: MasterModel, sol: MasterSolution, instance: Instance,
              config: SolverConfig, threads: int):
    """Exact subproblem values per epigraph component at the master point."""
    plan = sol.plan
    h: dict = {}
    results = []
    if master.kind == "mad":
        res = separate_mad(plan, sol.rho, sol.psi, instance, master.demand, config)
        results.append(res)
        for t in range(instance.T):
            h[t] = float(res.period_values[t])
        return h, results
    scen = master.scenarios.samples
    if master.kind == "wasserstein":
        def run(n):
            return separate_wasserstein(plan, sol.rho_w, scen[n], instance, n, config)
    else:
        def run(n):
            return separate_saa(plan, scen[n], instance, n, config)
    if threads > 1 and len(scen) > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(run, range(len(scen))))
    else:
        results = [run(n) for n in range(len(scen))]
    for res in results:
        for t in range(instance.T):
            h[(res.scenario, t)] = float(res.period_values[t])
    return h, results


def _epigraph_values(master: MasterModel, sol: MasterSolution, h: dict):
    """Pair each epigraph variable's value with its exact subproblem value."""
    if SINGLE_KEY in sol.delta:
        return {SINGLE_KEY: (sol.delta[SINGLE_KEY], sum(h.values()))}
    return {k: (sol.delta[k], h[k]) for k in sol.delta}


def _merge_cuts(cuts: list[Cut], iteration: int) -> Cut:
    """Aggregate per-scenario single cuts into the one master cut."""
    total = Cut(key=SINGLE_KEY, const=sum(c.const for c in cuts), iteration=iteration)
    for c in cuts:
        for k, v in c.x_coeffs.items():
            total.x_coeffs[k] = total.x_coeffs.get(k, 0.0) + v
        for k, v in c.rho_coeffs.items():
            total.rho_coeffs[k] = total.rho_coeffs.get(k, 0.0) + v
        for k, v in c.psi_coeffs.items():
            total.psi_coeffs[k] = total.psi_coeffs.get(k, 0.0) + v
        total.rho_w_coef += c.rho_w_coef
    return total


def solve(instance: Instance, ambiguity, risk=None, options: SolveOptions | None = None,
          fixed_plan: FirstStagePlan | None = None
          ) -> tuple[float, FirstStagePlan, DecompositionTrace]:
    """Cutting-plane solve of the chosen model; returns (objective, plan, trace).

    The returned objective is the final master value; on Optimal it matches
    the incumbent's exact re-evaluated objective within tolerance.  On an
    iteration or time cap the plan of the last master solve is returned with
    its certified bounds in the trace.
    """
    options = options or SolveOptions()
    risk = risk if risk is not None else Expectation()
    mopts = options.master_options()
    if fixed_plan is not None:
        if not plan_in_region(fixed_plan, instance):
            raise ValueError("fixed plan violates the first-stage region")
        mopts = MasterOptions(multi_cut=mopts.multi_cut, lb_inequalities=mopts.lb_inequalities,
                              symmetry_breaking=False, export_lp=mopts.export_lp)
    master = build_master(instance, ambiguity, risk, mopts, fixed_plan=fixed_plan)
    pool = CutPool()
    trace = DecompositionTrace()
    cfg = options.solver
    if options.inexact_master:
        cfg = SolverConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol,
                           mip_gap=max(cfg.mip_gap, 1e-4), time_limit=cfg.time_limit,
                           threads=cfg.threads)
        log.warning("inexact master mode: bounds remain valid but the Optimal "
                    "status is disabled")
    lb, ub = -np.inf, np.inf
    t_start = time.perf_counter()
    sol = None
    for it in range(1, options.max_iterations + 1):
        remaining = options.time_limit - (time.perf_counter() - t_start)
        if remaining <= 0:
            trace.status = TIME_LIMIT
            break
        step_cfg = SolverConfig(rel_tol=cfg.rel_tol, abs_tol=cfg.abs_tol, mip_gap=cfg.mip_gap,
                                time_limit=float(min(remaining, cfg.time_limit or np.inf)),
                                threads=cfg.threads)
        t0 = time.perf_counter()
        try:
            sol = master.solve(step_cfg)
        except SolverError:
            if sol is not None:  # ran out of time mid-master; keep the incumbent
                trace.status = TIME_LIMIT
                break
            raise
        master_time = time.perf_counter() - t0
        if not options.inexact_master:
            if sol.objective < lb - 1e-6 * (1.0 + abs(lb)):
                log.warning("master value decreased (%.9g -> %.9g)", lb, sol.objective)
            lb = max(lb, sol.objective)
        else:
            lb = sol.objective

        t0 = time.perf_counter()
        h, results = _separate(master, sol, instance, cfg, options.threads)
        separation_time = time.perf_counter() - t0
        ub = min(ub, master.incumbent_objective(sol, h))

        pool.update_activity(sol, options.rel_tol)
        pairs = _epigraph_values(master, sol, h)
        violated = {k for k, (d, hv) in pairs.items()
                    if d < hv - options.rel_tol * (1.0 + abs(d))}
        gap = ub - lb
        added = 0
        if violated:
            new_cuts: list[Cut] = []
            for res in results:
                new_cuts.extend(extract_cuts(res, master.kind, instance,
                                             options.multi_cut, iteration=it))
            if not options.multi_cut and len(new_cuts) > 1:
                new_cuts = [_merge_cuts(new_cuts, it)]
            for cut in new_cuts:
                if cut.key in violated:
                    master.add_cut(cut)
                    pool.add(cut)
                    added += 1
        trace.records.append(IterationRecord(it, lb, ub, gap, master_time,
                                             separation_time, added, len(pool)))
        if not violated:
            trace.status = OPTIMAL if not options.inexact_master else ITERATION_CAP
            break
        if time.perf_counter() - t_start > options.time_limit:
            trace.status = TIME_LIMIT
            break
    else:
        trace.status = ITERATION_CAP
    trace.total_time = time.perf_counter() - t_start
    return float(lb), sol.plan, trace


def evaluate_plan(plan: FirstStagePlan, instance: Instance, ambiguity, risk=None,
                  options: SolveOptions | None = None) -> float:
    """Exact risk functional of a fixed plan, plus its first-stage cost.

    Sample-average variants are computed directly from recourse solves;
    the robust variants re-run the cutting-plane loop with the first stage
    fixed, which converges to the worst-case value for that plan.
    """
    options = options or SolveOptions()
    risk = risk if risk is not None else Expectation()
    if not plan_in_region(plan, instance):
        raise ValueError("plan violates the first-stage region")
    if isinstance(ambiguity, SAA):
        ev = RecourseEvaluator(plan, instance, options.solver)
        costs = np.array([ev.value(w) for w in ambiguity.scenarios.samples])
        return plan.first_stage_cost(instance) + empirical_mean_cvar(costs, risk)
    objective, _plan, trace = solve(instance, ambiguity, risk, options, fixed_plan=plan)
    if trace.status != OPTIMAL:
        raise RuntimeError(f"fixed-plan evaluation did not converge: {trace.status}")
    return objective
