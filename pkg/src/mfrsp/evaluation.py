"""Out-of-sample simulation, radius calibration, and sensitivity sweeps.

Two simulation regimes: Set 1 redraws demand from the training distribution
(perfect distributional information); Set 2 perturbs it to a parameterized
uniform on [(1-delta) * lower, (1+delta) * upper], deliberately stepping
outside the support box, optionally with correlated cells via a Gaussian
copula.  Each replication re-solves the recourse with the plan fixed;
out-of-sample disappointment is the relative excess of realized total cost
over the model's optimal value, floored at zero.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .ambiguity import SAA, Expectation, MeanCVaR, Wasserstein
from .decomposition import OPTIMAL, SolveOptions, solve
from .instance import Instance, ScenarioSet, lognormal_params
from .recourse import FirstStagePlan, RecourseEvaluator

log = logging.getLogger(__name__)


@dataclass
class SimulationSpec:
    set_id: int = 1
    n_samples: int = 10_000
    delta: float = 0.0            # Set 2 only; ignored for Set 1
    correlation: float = 0.0
    seed: int = 0
    distribution: str = "lognormal"  # Set 1 marginal family

    def __post_init__(self):
        if self.set_id not in (1, 2):
            raise ValueError("set_id must be 1 or 2")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError("correlation must lie in [0, 1)")


@dataclass
class EvaluationReport:
    second_stage_cost: np.ndarray
    total_cost: np.ndarray
    disappointment: np.ndarray
    first_stage_cost: float
    model_optimum: float
    spec: SimulationSpec

    def summary(self) -> dict:
        out = {}
        for name, arr in (("second_stage_cost", self.second_stage_cost),
                          ("total_cost", self.total_cost),
                          ("disappointment", self.disappointment)):
            q = np.quantile(arr, [0.05, 0.25, 0.5, 0.75, 0.95])
            out[name] = {"mean": float(arr.mean()), "std": float(arr.std(ddof=1)) if len(arr) > 1 else 0.0,
                         "q05": float(q[0]), "q25": float(q[1]), "q50": float(q[2]),
                         "q75": float(q[3]), "q95": float(q[4])}
        return out

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["replication", "second_stage_cost", "total_cost", "disappointment"])
            for k in range(len(self.second_stage_cost)):
                w.writerow([k, repr(float(self.second_stage_cost[k])),
                            repr(float(self.total_cost[k])),
                            repr(float(self.disappointment[k]))])
            w.writerow([])
            w.writerow(["summary", "mean", "std", "q05", "q25", "q50", "q75", "q95"])
            for name, stats in self.summary().items():
                w.writerow([name] + [repr(stats[k]) for k in ("mean", "std", "q05", "q25",
                                                              "q50", "q75", "q95")])


def histogram_data(values: np.ndarray, bins: int = 50):
    """Bin edges and counts for external plotting; no rendering here."""
    counts, edges = np.histogram(np.asarray(values, dtype=float), bins=bins)
    return edges, counts


def _gaussian_block(rng: np.random.Generator, n: int, cells: int, correlation: float) -> np.ndarray:
    """Equicorrelated standard normals, one row per draw."""
    z = rng.standard_normal((n, cells))
    if correlation <= 0.0 or cells == 1:
        return z
    common = rng.standard_normal((n, 1))
    return np.sqrt(correlation) * common + np.sqrt(1.0 - correlation) * z


def correlated_sampler(instance: Instance, coefficient: float, seed: int, n: int = 1,
                       *, set_id: int = 1, delta: float = 0.0,
                       distribution: str = "lognormal", sigma_ratio: float = 0.5,
                       raw: bool = False) -> np.ndarray:
    """Demand draws with cross-cell dependence through a Gaussian copula.

    coefficient is the pairwise correlation of the underlying normals (the
    induced rank correlation is within a few percent of it); zero reduces to
    independent marginals.  raw=True skips the clamp/round stage, which the
    correlation diagnostics use.  Set 2 draws from the widened uniform
    envelope instead of the training marginals.
    """
    if not 0.0 <= coefficient < 1.0:
        raise ValueError("correlation coefficient must lie in [0, 1)")
    dem = instance.demand
    I, T = dem.mean.shape
    rng = np.random.default_rng(seed)
    z = _gaussian_block(rng, n, I * T, coefficient).reshape(n, I, T)
    if set_id == 2:
        lo = (1.0 - delta) * dem.lower
        hi = (1.0 + delta) * dem.upper
        # copula: push the normals through their own CDF, then the uniform's
        from scipy.stats import norm
        u = norm.cdf(z)
        draws = lo + (hi - lo) * u
        return draws if raw else np.rint(draws)
    if distribution == "lognormal":
        mu_log, sig_log = lognormal_params(dem.mean, sigma_ratio * dem.mean)
        draws = np.exp(mu_log + sig_log * z)
    elif distribution == "uniform":
        from scipy.stats import norm
        draws = dem.lower + (dem.upper - dem.lower) * norm.cdf(z)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    if raw:
        return draws
    return np.rint(np.clip(draws, dem.lower, dem.upper))


def draw_out_of_sample(instance: Instance, spec: SimulationSpec) -> np.ndarray:
    """The (n, I, T) demand panel a simulation spec describes."""
    return correlated_sampler(instance, spec.correlation, spec.seed, spec.n_samples,
                              set_id=spec.set_id, delta=spec.delta,
                              distribution=spec.distribution)


def simulate(plan: FirstStagePlan, instance: Instance, spec: SimulationSpec,
             model_opt: float, options: SolveOptions | None = None) -> EvaluationReport:
    """Fix the plan, re-solve the recourse for each demand draw, aggregate."""
    options = options or SolveOptions()
    draws = draw_out_of_sample(instance, spec)
    ev = RecourseEvaluator(plan, instance, options.solver)
    second = np.array([ev.value(w) for w in draws])
    first = plan.first_stage_cost(instance)
    total = first + second
    disappointment = np.maximum((total - model_opt) / model_opt, 0.0) * 100.0
    return EvaluationReport(second, total, disappointment, first, model_opt, spec)


DEFAULT_EPSILON_GRID = tuple([round(0.01 * k, 2) for k in range(1, 10)]
                             + [round(0.1 * k, 1) for k in range(1, 10)]
                             + list(range(1, 11)))


@dataclass
class CalibrationResult:
    epsilon: float
    winners: list[float]
    mean_test_cost: dict


def calibrate_epsilon(instance: Instance, samples: ScenarioSet,
                      grid=DEFAULT_EPSILON_GRID, folds: int = 30, seed: int = 0,
                      train_fraction: float = 0.7,
                      options: SolveOptions | None = None) -> CalibrationResult:
    """Cross-validate the Wasserstein radius on repeated train/test splits.

    Per repetition: random 70/30 split, solve the Wasserstein model on the
    training scenarios for every radius in the grid, score each plan by its
    mean second-stage cost on the test scenarios, and keep the smallest
    minimizing radius.  The calibrated radius is the average of the
    per-repetition winners.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("radius grid must be nonempty")
    options = options or SolveOptions()
    rng = np.random.default_rng(seed)
    N = samples.N
    n_train = max(1, int(round(train_fraction * N)))
    if n_train >= N:
        n_train = N - 1
    if n_train < 1:
        raise ValueError("need at least two scenarios to split")
    winners = []
    cost_by_eps = {eps: [] for eps in grid}
    for _rep in range(folds):
        perm = rng.permutation(N)
        train = ScenarioSet(samples.samples[perm[:n_train]])
        test = samples.samples[perm[n_train:]]
        best_eps, best_cost = None, np.inf
        for eps in grid:
            _obj, plan, trace = solve(instance, Wasserstein(train, float(eps)),
                                      Expectation(), options)
            if trace.status != OPTIMAL:
                log.warning("radius %.3g: solve ended with %s; skipping", eps, trace.status)
                continue
            ev = RecourseEvaluator(plan, instance, options.solver)
            cost = float(np.mean([ev.value(w) for w in test]))
            cost_by_eps[eps].append(cost)
            # strictly-smaller keeps the smallest minimizing radius on ties
            if cost < best_cost - 1e-12:
                best_eps, best_cost = eps, cost
        if best_eps is not None:
            winners.append(float(best_eps))
    if not winners:
        raise RuntimeError("calibration produced no successful repetitions")
    mean_costs = {eps: float(np.mean(v)) for eps, v in cost_by_eps.items() if v}
    return CalibrationResult(float(np.mean(winners)), winners, mean_costs)


_MODEL_NAMES = ("saa", "mad-dro", "w-dro", "saa-cvar", "mad-cvar", "w-cvar")


def make_ambiguity_risk(model: str, instance: Instance, scenarios: ScenarioSet | None,
                        epsilon: float = 1.0, theta: float = 0.5, kappa: float = 0.95):
    """Map a model name to its (ambiguity, risk) pair."""
    from .ambiguity import MAD
    if model not in _MODEL_NAMES:
        raise ValueError(f"unknown model {model!r}; expected one of {_MODEL_NAMES}")
    base, _, tail = model.partition("-")
    risk = MeanCVaR(theta, kappa) if model.endswith("cvar") else Expectation()
    if model.startswith("saa"):
        if scenarios is None:
            raise ValueError("sample-based model needs scenarios")
        return SAA(scenarios), risk
    if model.startswith("mad"):
        return MAD(), risk
    if scenarios is None:
        raise ValueError("Wasserstein model needs scenarios")
    return Wasserstein(scenarios, epsilon), risk


def sweep(instance: Instance, axis: str, values, models, *,
          scenarios: ScenarioSet | None = None, epsilon: float = 1.0,
          theta: float = 0.5, kappa: float = 0.95,
          options: SolveOptions | None = None) -> list[dict]:
    """Re-solve each model across one parameter axis; never abort mid-sweep.

    axis is 'C', 'f', 'gamma' (cost scaling) or 'theta' (risk blend).
    Each cell records fleet size, objective, and the split into first-stage
    and worst-case (or sample) second-stage cost; failures are recorded in
    the row and the sweep continues.
    """
    if axis not in ("C", "f", "gamma", "theta"):
        raise ValueError("axis must be one of C, f, gamma, theta")
    if not len(list(values)):
        raise ValueError("values must be nonempty")
    options = options or SolveOptions()
    rows = []
    for value in values:
        inst = instance
        th = theta
        if axis == "C":
            inst = instance.with_costs(capacity=float(value))
        elif axis == "f":
            inst = instance.with_costs(fleet_cost=float(value))
        elif axis == "gamma":
            inst = instance.with_costs(shortage_penalty=float(value))
        else:
            th = float(value)
        for model in models:
            row = {"model": model, "axis": axis, "value": float(value)}
            try:
                amb, risk = make_ambiguity_risk(model, inst, scenarios, epsilon, th, kappa)
                objective, plan, trace = solve(inst, amb, risk, options)
                row.update(status=trace.status, objective=objective,
                           fleet_size=plan.fleet_size,
                           first_stage=plan.first_stage_cost(inst),
                           second_stage=objective - plan.first_stage_cost(inst),
                           iterations=trace.iterations)
            except Exception as exc:  # noqa: BLE001 - sweep must continue
                log.warning("sweep cell (%s=%s, %s) failed: %s", axis, value, model, exc)
                row.update(status="error", error=str(exc))
            rows.append(row)
    return rows


def sweep_to_csv(rows: list[dict], path) -> None:
    cols = ["model", "axis", "value", "status", "fleet_size", "objective",
            "first_stage", "second_stage", "iterations", "error"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for row in rows:
            w.writerow([row.get(c, "") for c in cols])
