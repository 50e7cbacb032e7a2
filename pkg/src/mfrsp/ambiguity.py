"""Uncertainty specifications and the mathematical objects backing them.

Three ways to describe the demand distribution: an empirical sample (SAA), a
moment set built from mean/MAD/support, and a 1-Wasserstein ball around an
empirical distribution.  Risk is either plain expectation or a mean-CVaR
blend.  The module also houses desk-scale oracles: the transportation-LP
Wasserstein distance and an exact moment-LP evaluation of the worst-case
expected recourse under the MAD set.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .instance import DemandModel, Instance, ScenarioSet
from .recourse import FirstStagePlan, RecourseEvaluator
from .solverapi import Model, SolverConfig


@dataclass
class SAA:
    scenarios: ScenarioSet


@dataclass
class MAD:
    demand: DemandModel | None = None  # None -> use the instance's demand model

    def resolve(self, instance: Instance) -> DemandModel:
        return self.demand if self.demand is not None else instance.demand


@dataclass
class Wasserstein:
    scenarios: ScenarioSet
    epsilon: float

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("Wasserstein radius must be nonnegative")


AmbiguitySpec = SAA | MAD | Wasserstein


@dataclass
class Expectation:
    pass


@dataclass
class MeanCVaR:
    theta: float  # weight on the expectation term; 1 collapses to Expectation
    kappa: float = 0.95

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not 0.0 < self.kappa < 1.0:
            raise ValueError("kappa must lie in (0, 1)")


RiskSpec = Expectation | MeanCVaR


def empirical_mean_cvar(values: np.ndarray, risk: RiskSpec) -> float:
    """Theta-blend of mean and CVaR_kappa over an equally-weighted sample."""
    values = np.asarray(values, dtype=float)
    mean = float(values.mean())
    if isinstance(risk, Expectation):
        return mean
    n = len(values)
    best = np.inf
    for zeta in values:  # discrete CVaR attains its optimum at a sample point
        best = min(best, zeta + np.maximum(values - zeta, 0.0).sum() / ((1.0 - risk.kappa) * n))
    return risk.theta * mean + (1.0 - risk.theta) * float(best)


def wasserstein_distance_1(p_support: np.ndarray, p_prob: np.ndarray,
                           q_support: np.ndarray, q_prob: np.ndarray,
                           config: SolverConfig | None = None) -> float:
    """1-Wasserstein distance between two finite-support distributions.

    Ground cost is the l1 norm between support points; computed by solving
    the transportation LP exactly.
    """
    p_support = np.atleast_2d(np.asarray(p_support, dtype=float))
    q_support = np.atleast_2d(np.asarray(q_support, dtype=float))
    p_prob = np.asarray(p_prob, dtype=float)
    q_prob = np.asarray(q_prob, dtype=float)
    if abs(p_prob.sum() - 1.0) > 1e-9 or abs(q_prob.sum() - 1.0) > 1e-9:
        raise ValueError("probability weights must sum to 1")
    if np.any(p_prob < 0) or np.any(q_prob < 0):
        raise ValueError("probability weights must be nonnegative")
    K, L = len(p_prob), len(q_prob)
    cost = np.abs(p_support[:, None, :] - q_support[None, :, :]).sum(axis=2)
    m = Model(minimize=True, name="transport")
    t = np.array([[m.add_var(0.0, obj=cost[k, l]) for l in range(L)] for k in range(K)])
    for k in range(K):
        m.add_row([(int(t[k, l]), 1.0) for l in range(L)], "==", float(p_prob[k]))
    for l in range(L):
        m.add_row([(int(t[k, l]), 1.0) for k in range(K)], "==", float(q_prob[l]))
    out = m.solve(config or SolverConfig()).require_optimal("transportation LP")
    return float(out.objective)


def mad_worstcase_support_count(I: int, T: int) -> int:
    """Atom count of the worst-case distribution under the MAD moment set.

    With a supermodular second stage the extremal distribution lives on
    2n + 1 points for an n-dimensional random vector; here n = I*T.
    """
    if I < 1 or T < 1:
        raise ValueError("I and T must be >= 1")
    return 2 * I * T + 1


def _atom_grid(demand: DemandModel):
    """Per-cell {lower, mean, upper} choices, deduplicated per cell."""
    I, T = demand.mean.shape
    choices = []
    for i in range(I):
        for t in range(T):
            vals = sorted({float(demand.lower[i, t]), float(demand.mean[i, t]),
                           float(demand.upper[i, t])})
            choices.append(vals)
    return choices


def mad_worstcase_expectation_oracle(plan: FirstStagePlan, instance: Instance,
                                     demand: DemandModel | None = None, *,
                                     guard: int = 8,
                                     config: SolverConfig | None = None) -> float:
    """Exact sup of E[Q(plan, W)] over the MAD moment set, by moment LP.

    The maximand of the inner problem is convex in W on every orthant cell
    around the mean (Q is convex, the deviation penalty is linear per cell),
    so an extremal distribution concentrates on the per-cell grid
    {lower, mean, upper}^(I*T).  Restricting atoms to that grid and solving
    the moment LP over atom probabilities is therefore exact.  Desk-scale
    only: the grid has up to 3^(I*T) atoms.
    """
    demand = demand if demand is not None else instance.demand
    I, T = demand.mean.shape
    if I * T > guard:
        raise ValueError(f"oracle limited to I*T <= {guard} cells")
    choices = _atom_grid(demand)
    atoms = np.array(list(itertools.product(*choices)))  # (K, I*T)
    K = atoms.shape[0]
    ev = RecourseEvaluator(plan, instance, config)

    # periods are independent, so cache per-period recourse values by column
    cache: dict[tuple, float] = {}

    def q_value(watom: np.ndarray) -> float:
        w = watom.reshape(I, T)
        total = 0.0
        for t in range(T):
            key = (t, tuple(w[:, t]))
            if key not in cache:
                cache[key] = ev.period_value(t, w[:, t])
            total += cache[key]
        return total

    q = np.array([q_value(atoms[k]) for k in range(K)])

    m = Model(minimize=False, name="mad_moment_lp")
    p = np.array([m.add_var(0.0, 1.0, obj=q[k]) for k in range(K)])
    mu = demand.mean.reshape(-1)
    eta = demand.mad.reshape(-1)
    for c in range(I * T):
        m.add_row([(int(p[k]), float(atoms[k, c])) for k in range(K)], "==", float(mu[c]))
        m.add_row([(int(p[k]), abs(float(atoms[k, c]) - float(mu[c]))) for k in range(K)],
                  "<=", float(eta[c]))
    m.add_row([(int(p[k]), 1.0) for k in range(K)], "==", 1.0)
    out = m.solve(config or SolverConfig()).require_optimal("MAD moment LP")
    return float(out.objective)
