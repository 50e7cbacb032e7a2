"""Inner maximization subproblems that generate optimality cuts.

Each subproblem maximizes the dual recourse value minus the ambiguity
penalty over demand realizations in the support box.  For a fixed dual pair
the maximand is linear in each demand cell except for an absolute-deviation
kink, so an optimal demand sits on the per-cell three-point grid
{lower, anchor, upper} (anchor = mean for the moment model, the scenario
point for the Wasserstein model).  The implementation encodes that grid with
two ordered binaries per cell and linearizes the bilinear lambda*W product
against them exactly, which keeps every reported product tight
(pi = lambda * W to machine precision) and every extracted cut valid.

Subproblems separate over periods and are solved per period; values and
worst-case demands are reassembled into one result per call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .instance import Instance
from .models import SINGLE_KEY, Cut
from .recourse import FirstStagePlan, RecourseEvaluator
from .solverapi import Model, SolverConfig


@dataclass
class SeparationResult:
    value: float
    period_values: np.ndarray          # (T,)
    worst_case_demand: np.ndarray      # (I, T)
    lam: np.ndarray                    # (I, T)
    v: np.ndarray                      # (J, M, T)
    pi: np.ndarray                     # (I, T), lambda * W at the optimum
    deviation: np.ndarray              # (I, T): |W - mean| or |W - W^n|
    scenario: int | None = None


def _complete_v(instance: Instance, lam_t: np.ndarray) -> np.ndarray:
    """Largest dual-feasible v for a fixed lambda: min_i(beta d - lambda) ^ 0."""
    beta_d = instance.costs.assignment_rate * instance.network.customer_site_distance
    return np.minimum((beta_d - lam_t[:, None]).min(axis=0), 0.0)


def _solve_period(instance: Instance, plan: FirstStagePlan, t: int,
                  anchor_t: np.ndarray, lin_rho: np.ndarray, dev_price: np.ndarray,
                  config: SolverConfig):
    """Maximize sum_i pi_i + C sum v - sum_i (rho_i W_i + price_i dev_i) for one period.

    anchor_t is the kink point per cell; lin_rho the linear price on W;
    dev_price the (nonnegative) price on the deviation |W - anchor|.
    Returns (value, W*, lambda*, v*_by_site, pi*, dev*).
    """
    inst = instance
    I = inst.I
    gamma = inst.costs.shortage_penalty
    beta_d = inst.costs.assignment_rate * inst.network.customer_site_distance
    C = inst.costs.capacity
    lo = inst.demand.lower[:, t]
    hi = inst.demand.upper[:, t]
    anchor = np.clip(anchor_t, lo, hi)
    span1 = anchor - lo
    span2 = hi - anchor

    counts = plan.site_counts(t)
    sites = np.flatnonzero(counts)

    m = Model(minimize=False, name=f"separation_t{t}")
    lam = np.array([m.add_var(0.0, gamma, name=f"lam_{i}") for i in range(I)])
    v = {}
    for j in sites:
        lb_v = min(0.0, float((beta_d[:, j] - gamma).min()))
        v[j] = m.add_var(lb_v, 0.0, obj=C * counts[j], name=f"v_{j}")
        for i in range(I):
            m.add_row([(int(lam[i]), 1.0), (int(v[j]), 1.0)], "<=", float(beta_d[i, j]))

    # demand grid: W = lo + span1*s1 + span2*s2 with s2 <= s1;
    # dev = span1*(1 - s1) + span2*s2; pi = lam*lo + span1*tau1 + span2*tau2
    s1 = np.array([m.add_binary(name=f"s1_{i}") for i in range(I)])
    s2 = np.array([m.add_binary(name=f"s2_{i}") for i in range(I)])
    tau1 = np.array([m.add_var(0.0, gamma, name=f"tau1_{i}") for i in range(I)])
    tau2 = np.array([m.add_var(0.0, gamma, name=f"tau2_{i}") for i in range(I)])
    const = 0.0
    for i in range(I):
        m.add_row([(int(s2[i]), 1.0), (int(s1[i]), -1.0)], "<=", 0.0)
        for tau, s in ((tau1[i], s1[i]), (tau2[i], s2[i])):
            m.add_row([(int(tau), 1.0), (int(s), -gamma)], "<=", 0.0)
            m.add_row([(int(tau), 1.0), (int(lam[i]), -1.0)], "<=", 0.0)
            m.add_row([(int(tau), 1.0), (int(lam[i]), -1.0), (int(s), -gamma)], ">=", -gamma)
        # objective per cell, constants folded out of the model
        m.set_obj(int(lam[i]), float(lo[i]))
        m.set_obj(int(tau1[i]), float(span1[i]))
        m.set_obj(int(tau2[i]), float(span2[i]))
        obj_s1 = -lin_rho[i] * span1[i] + dev_price[i] * span1[i]
        obj_s2 = -lin_rho[i] * span2[i] - dev_price[i] * span2[i]
        m.set_obj(int(s1[i]), float(obj_s1))
        m.set_obj(int(s2[i]), float(obj_s2))
        const += -lin_rho[i] * lo[i] - dev_price[i] * span1[i]

    out = m.solve(config).require_optimal("separation subproblem")
    xs = out.x
    s1v = np.rint(xs[s1])
    s2v = np.rint(xs[s2])
    w_star = lo + span1 * s1v + span2 * s2v
    dev = span1 * (1.0 - s1v) + span2 * s2v
    lam_star = xs[lam]
    pi_star = lam_star * w_star
    value = float(out.objective) + const
    v_by_site = _complete_v(instance, lam_star)
    return value, w_star, lam_star, v_by_site, pi_star, dev


def separate_mad(plan: FirstStagePlan, rho: np.ndarray, psi: np.ndarray,
                 instance: Instance, demand=None,
                 config: SolverConfig | None = None) -> SeparationResult:
    """Worst-case demand against the moment duals (rho, psi)."""
    config = config or SolverConfig()
    dem = demand if demand is not None else instance.demand
    if np.any(np.asarray(psi) < -1e-9):
        raise ValueError("psi must be nonnegative")
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    period_values = np.zeros(T)
    w = np.zeros((I, T))
    lam = np.zeros((I, T))
    v = np.zeros((J, M, T))
    pi = np.zeros((I, T))
    dev = np.zeros((I, T))
    for t in range(T):
        val, w_t, lam_t, v_t, pi_t, dev_t = _solve_period(
            instance, plan, t, dem.mean[:, t], np.asarray(rho)[:, t],
            np.maximum(np.asarray(psi)[:, t], 0.0), config)
        period_values[t] = val
        w[:, t], lam[:, t], pi[:, t], dev[:, t] = w_t, lam_t, pi_t, dev_t
        v[:, :, t] = v_t[:, None]
    return SeparationResult(float(period_values.sum()), period_values, w, lam, v, pi, dev)


def separate_wasserstein(plan: FirstStagePlan, rho_w: float, scenario: np.ndarray,
                         instance: Instance, scenario_index: int | None = None,
                         config: SolverConfig | None = None) -> SeparationResult:
    """Worst-case demand anchored at one sample point, with transport price rho_w."""
    if rho_w < -1e-9:
        raise ValueError("rho_w must be nonnegative")
    config = config or SolverConfig()
    scenario = np.asarray(scenario, dtype=float)
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    period_values = np.zeros(T)
    w = np.zeros((I, T))
    lam = np.zeros((I, T))
    v = np.zeros((J, M, T))
    pi = np.zeros((I, T))
    dev = np.zeros((I, T))
    price = np.full(I, max(rho_w, 0.0))
    for t in range(T):
        val, w_t, lam_t, v_t, pi_t, dev_t = _solve_period(
            instance, plan, t, scenario[:, t], np.zeros(I), price, config)
        period_values[t] = val
        w[:, t], lam[:, t], pi[:, t], dev[:, t] = w_t, lam_t, pi_t, dev_t
        v[:, :, t] = v_t[:, None]
    return SeparationResult(float(period_values.sum()), period_values, w, lam, v, pi, dev,
                            scenario=scenario_index)


def separate_saa(plan: FirstStagePlan, scenario: np.ndarray, instance: Instance,
                 scenario_index: int | None = None,
                 config: SolverConfig | None = None) -> SeparationResult:
    """Recourse dual at one sample point (the L-shaped subproblem)."""
    config = config or SolverConfig()
    scenario = np.asarray(scenario, dtype=float)
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    ev = RecourseEvaluator(plan, instance, config)
    period_values = np.zeros(T)
    lam = np.zeros((I, T))
    v = np.zeros((J, M, T))
    for t in range(T):
        val, lam_t, _v_sites, _z = ev.period_value(t, scenario[:, t], want_duals=True)
        period_values[t] = val
        lam[:, t] = lam_t
        v[:, :, t] = _complete_v(instance, lam_t)[:, None]
    pi = lam * scenario
    return SeparationResult(float(period_values.sum()), period_values, scenario.copy(),
                            lam, v, pi, np.zeros((I, T)), scenario=scenario_index)


def extract_cuts(result: SeparationResult, mode: str, instance: Instance,
                 multi_cut: bool = True, iteration: int = 0) -> list[Cut]:
    """Turn a separation result into per-period (or aggregated) master cuts.

    mode is 'mad', 'wasserstein' or 'saa'; for the scenario-based modes the
    result's scenario index keys the epigraph.
    """
    I, J, M, T = instance.I, instance.J, instance.M, instance.T
    C = instance.costs.capacity
    cuts = []
    for t in range(T):
        if mode == "mad":
            key = t
        elif mode in ("wasserstein", "saa"):
            key = (result.scenario, t)
        else:
            raise ValueError(f"unknown cut mode {mode!r}")
        cut = Cut(key=key, const=0.0, iteration=iteration)
        cut.x_coeffs = {(j, m, t): C * result.v[j, m, t]
                        for j in range(J) for m in range(M) if result.v[j, m, t] != 0.0}
        if mode == "mad":
            cut.const = float(result.pi[:, t].sum())
            cut.rho_coeffs = {(i, t): -float(result.worst_case_demand[i, t]) for i in range(I)}
            cut.psi_coeffs = {(i, t): -float(result.deviation[i, t]) for i in range(I)}
        elif mode == "wasserstein":
            cut.const = float(result.pi[:, t].sum())
            cut.rho_w_coef = -float(result.deviation[:, t].sum())
        else:  # saa: constant lambda' W^n, no dual-price coefficients
            cut.const = float(result.pi[:, t].sum())
        cuts.append(cut)
    if multi_cut:
        return cuts
    merged = Cut(key=SINGLE_KEY, const=sum(c.const for c in cuts), iteration=iteration)
    for c in cuts:
        merged.x_coeffs.update(c.x_coeffs)
        merged.rho_coeffs.update(c.rho_coeffs)
        merged.psi_coeffs.update(c.psi_coeffs)
        merged.rho_w_coef += c.rho_w_coef
    return [merged]
