"""Problem datum: network, costs, demand statistics, plus generators and file IO.

An instance bundles everything the deterministic side of the problem needs:
customer/site geometry, per-period travel times between sites, cost rates,
the planning horizon, and the demand model (mean, mean absolute deviation,
and a box support per customer and period).

Benchmark instances follow the usual recipe for this problem family: nodes
uniform on a 100x100 plane, Euclidean assignment distances, per-cell means
uniform on [20, 60] with support [20, 60], fleet cost U[1000, 1500],
assignment rate U[0.1, 0.15], shortage penalty U[10, 15].  The Lehigh County
instances use the published 20-town population list with two demand
structures (population bands, and capped population shares).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

SCHEMA_VERSION = 1

#: (town, 2010 population, structure-1 mean, structure-2 mean)
LEHIGH_TOWNS: list[tuple[str, int, int, int]] = [
    ("Allentown", 118032, 40, 60),
    ("Bethlehem", 74982, 40, 60),
    ("Emmaus", 11211, 40, 43),
    ("Ancient Oaks", 6661, 30, 25),
    ("Catasauqua", 6436, 30, 25),
    ("Wescosville", 5872, 30, 22),
    ("Fountain Hill", 4597, 20, 18),
    ("Dorneyville", 4406, 20, 17),
    ("Slatington", 4232, 20, 16),
    ("Breinigsville", 4138, 20, 16),
    ("Coplay", 3192, 20, 12),
    ("Macungie", 3074, 20, 12),
    ("Schnecksville", 2935, 20, 11),
    ("Coopersburg", 2386, 20, 9),
    ("Alburtis", 2361, 20, 9),
    ("Cetronia", 2115, 20, 8),
    ("Trexlertown", 1988, 20, 8),
    ("Laurys Station", 1243, 20, 5),
    ("New Tripoli", 898, 15, 3),
    ("Slatedale", 455, 15, 3),
]


@dataclass
class Network:
    customer_count: int
    site_count: int
    customer_site_distance: np.ndarray  # (I, J) float
    site_site_travel_periods: np.ndarray  # (J, J) int

    def __post_init__(self):
        self.customer_site_distance = np.asarray(self.customer_site_distance, dtype=float)
        self.site_site_travel_periods = np.asarray(self.site_site_travel_periods, dtype=int)


@dataclass
class CostParams:
    fleet_cost: float          # per mobile facility used
    inconvenience_reward: float  # per stationary facility-period (alpha)
    assignment_rate: float     # per demand unit per distance unit (beta)
    shortage_penalty: float    # per unmet demand unit (gamma)
    capacity: float            # demand units per period per facility


@dataclass
class DemandModel:
    mean: np.ndarray   # (I, T)
    mad: np.ndarray    # (I, T)
    lower: np.ndarray  # (I, T)
    upper: np.ndarray  # (I, T)

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=float)
        self.mad = np.asarray(self.mad, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    def mad_bound(self) -> np.ndarray:
        """Largest MAD a distribution with this mean and box support can have.

        For a bounded support the MAD of any distribution with mean mu on
        [lo, hi] is at most 2 (mu - lo)(hi - mu) / (hi - lo); a degenerate
        cell (lo == hi) forces zero deviation.
        """
        width = self.upper - self.lower
        out = np.zeros_like(self.mean)
        ok = width > 0
        out[ok] = 2.0 * (self.mean[ok] - self.lower[ok]) * (self.upper[ok] - self.mean[ok]) / width[ok]
        return out


@dataclass
class Instance:
    network: Network
    costs: CostParams
    demand: DemandModel
    horizon: int
    fleet_limit: int

    @property
    def I(self) -> int:  # noqa: E743 - domain index name
        return self.network.customer_count

    @property
    def J(self) -> int:
        return self.network.site_count

    @property
    def T(self) -> int:
        return self.horizon

    @property
    def M(self) -> int:
        return self.fleet_limit

    def with_costs(self, **kwargs) -> "Instance":
        return replace(self, costs=replace(self.costs, **kwargs))


@dataclass
class ScenarioSet:
    samples: np.ndarray  # (N, I, T) integer-valued

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)

    @property
    def N(self) -> int:
        return self.samples.shape[0]

    def subset(self, idx) -> "ScenarioSet":
        return ScenarioSet(self.samples[np.asarray(idx)])


@dataclass
class ValidationResult:
    ok: bool
    violations: list[str] = field(default_factory=list)


def validate(instance: Instance) -> ValidationResult:
    """Check every structural invariant; violations are the payload, not errors."""
    v: list[str] = []
    net, costs, dem = instance.network, instance.costs, instance.demand
    I, J, T = net.customer_count, net.site_count, instance.horizon
    d, trav = net.customer_site_distance, net.site_site_travel_periods

    if I <= 0 or J <= 0 or T <= 0 or instance.fleet_limit <= 0:
        v.append("nonpositive dimension (I, J, T and fleet limit must be >= 1)")
    if d.shape != (I, J):
        v.append(f"distance matrix shape {d.shape} != ({I}, {J})")
    if trav.shape != (J, J):
        v.append(f"travel matrix shape {trav.shape} != ({J}, {J})")
    for name, arr in (("mean", dem.mean), ("mad", dem.mad), ("lower", dem.lower), ("upper", dem.upper)):
        if arr.shape != (I, T):
            v.append(f"demand {name} shape {arr.shape} != ({I}, {T})")
    if v:
        return ValidationResult(False, v)

    if not np.all(np.isfinite(d)):
        v.append("nonfinite distance entries")
    if np.any(d < 0):
        v.append("negative distance entries")
    if np.any(np.diag(trav) != 0):
        v.append("travel periods t[j][j] must be 0 on the diagonal")
    if np.any(trav != trav.T):
        v.append("travel periods must be symmetric")
    if np.any(trav < 0):
        v.append("negative travel periods")

    # Triangle-inequality consistency.  Only customer-site distances are
    # stored, so we check the implied necessary condition: for every site
    # pair (j, j') the spread max_i |d[i][j] - d[i][j']| cannot exceed any
    # customer's detour min_i (d[i][j] + d[i][j']).
    if np.all(np.isfinite(d)):
        for j in range(J):
            for jp in range(j + 1, J):
                spread = np.max(np.abs(d[:, j] - d[:, jp]))
                detour = np.min(d[:, j] + d[:, jp])
                if spread > detour + 1e-9 * (1.0 + detour):
                    v.append(f"triangle inequality violated between sites ({j},{jp})")

    lo, mu, hi, eta = dem.lower, dem.mean, dem.upper, dem.mad
    bad = np.argwhere(lo < 0)
    for i, t in bad:
        v.append(f"negative support lower bound at (i,t)=({i},{t})")
    bad = np.argwhere(mu < lo - 1e-9)
    for i, t in bad:
        v.append(f"mean below support at (i,t)=({i},{t})")
    bad = np.argwhere(mu > hi + 1e-9)
    for i, t in bad:
        v.append(f"mean above support at (i,t)=({i},{t})")
    if np.any(eta < -1e-12):
        v.append("negative mad entries")
    bound = dem.mad_bound()
    bad = np.argwhere(eta > bound + 1e-9 * (1.0 + bound))
    for i, t in bad:
        v.append(f"mad above feasibility bound at (i,t)=({i},{t})")

    if costs.fleet_cost <= 0:
        v.append("fleet cost must be positive")
    if costs.shortage_penalty <= 0:
        v.append("shortage penalty must be positive")
    if costs.assignment_rate < 0:
        v.append("assignment rate must be nonnegative")
    if costs.capacity <= 0:
        v.append("capacity must be positive")
    if costs.inconvenience_reward < 0 or costs.inconvenience_reward >= costs.fleet_cost:
        v.append("inconvenience reward must satisfy 0 <= alpha < fleet cost")

    return ValidationResult(not v, v)


# ---------------------------------------------------------------------------
# generators
# ---------------------------------------------------------------------------

def travel_periods_from_distance(site_distance: np.ndarray, speed: float = 50.0) -> np.ndarray:
    """Discretize site-to-site distances into whole periods (>= 1 off-diagonal)."""
    J = site_distance.shape[0]
    trav = np.maximum(1, np.rint(site_distance / speed).astype(int))
    trav[np.diag_indices(J)] = 0
    return trav


def generate_benchmark(I: int, J: int, T: int, seed: int, *, speed: float = 50.0,
                       capacity: float = 100.0, fleet_limit: int | None = None,
                       support: tuple[float, float] = (20.0, 60.0),
                       alpha: float | None = None) -> tuple[Instance, dict]:
    """Random plane instance; a pure function of (sizes, seed, overrides).

    When J == I the candidate sites are the customer nodes themselves (the
    benchmark instances use a single vertex set); otherwise J extra site
    nodes are drawn from the same plane.  Returns the instance plus an RNG
    trace recording the seed and the realized cost draws.
    """
    if I < 1 or J < 1 or T < 1:
        raise ValueError("I, J and T must all be >= 1")
    rng = np.random.default_rng(seed)
    customers = rng.uniform(0.0, 100.0, size=(I, 2))
    sites = customers if J == I else rng.uniform(0.0, 100.0, size=(J, 2))
    f = float(rng.uniform(1000.0, 1500.0))
    beta = float(rng.uniform(0.1, 0.15))
    gamma = float(rng.uniform(10.0, 15.0))
    lo, hi = support
    mu = rng.uniform(lo, hi, size=(I, T))

    d = np.linalg.norm(customers[:, None, :] - sites[None, :, :], axis=2)
    site_d = np.linalg.norm(sites[:, None, :] - sites[None, :, :], axis=2)
    trav = travel_periods_from_distance(site_d, speed)

    inst = Instance(
        network=Network(I, J, d, trav),
        costs=CostParams(
            fleet_cost=f,
            inconvenience_reward=0.1 if alpha is None else alpha,
            assignment_rate=beta,
            shortage_penalty=gamma,
            capacity=capacity,
        ),
        demand=DemandModel(
            mean=mu,
            mad=np.zeros((I, T)),
            lower=np.full((I, T), float(lo)),
            upper=np.full((I, T), float(hi)),
        ),
        horizon=T,
        fleet_limit=J if fleet_limit is None else fleet_limit,
    )
    trace = {
        "seed": seed, "I": I, "J": J, "T": T, "speed": speed,
        "draws": {"fleet_cost": f, "assignment_rate": beta, "shortage_penalty": gamma},
    }
    return inst, trace


def lehigh_mean_structure_1(population: float) -> float:
    """Population-band demand means: >=10k -> 40, [5k,10k) -> 30, [1k,5k) -> 20, else 15."""
    if population < 0:
        raise ValueError("population must be nonnegative")
    if population >= 10_000:
        return 40.0
    if population >= 5_000:
        return 30.0
    if population >= 1_000:
        return 20.0
    return 15.0


def lehigh_mean_structure_2(population: float, total: float) -> float:
    """Capped population-share means: min(60, share x 1000), floored at 3."""
    if population < 0:
        raise ValueError("population must be nonnegative")
    return float(min(60.0, max(3.0, round(population / total * 1000.0))))


def generate_lehigh(variant: int, populations: list[float] | None = None, *,
                    horizon: int = 10, seed: int = 0, speed: float = 50.0,
                    capacity: float = 100.0, fleet_limit: int | None = None) -> Instance:
    """Service-region instance with population-driven demand means.

    ``populations=None`` uses the canonical 20-town Lehigh County list, for
    which the published per-town means are reproduced exactly.  Geometry and
    travel periods are synthetic (seeded plane layout); support is the band
    [0.5 mu, 1.5 mu] around each mean.
    """
    if variant not in (1, 2):
        raise ValueError("variant must be 1 or 2")
    canonical = populations is None
    pops = [float(p) for p in (t[1] for t in LEHIGH_TOWNS)] if canonical else [float(p) for p in populations]
    if not pops:
        raise ValueError("populations must be nonempty")
    if any(p < 0 for p in pops):
        raise ValueError("population must be nonnegative")

    if canonical:
        means = [float(t[2] if variant == 1 else t[3]) for t in LEHIGH_TOWNS]
    elif variant == 1:
        means = [lehigh_mean_structure_1(p) for p in pops]
    else:
        total = sum(pops)
        means = [lehigh_mean_structure_2(p, total) for p in pops]

    I = J = len(pops)
    T = horizon
    rng = np.random.default_rng(seed)
    nodes = rng.uniform(0.0, 100.0, size=(I, 2))
    f = float(rng.uniform(1000.0, 1500.0))
    beta = float(rng.uniform(0.1, 0.15))
    gamma = float(rng.uniform(10.0, 15.0))
    d = np.linalg.norm(nodes[:, None, :] - nodes[None, :, :], axis=2)
    trav = travel_periods_from_distance(d, speed)
    mu = np.tile(np.asarray(means)[:, None], (1, T))
    return Instance(
        network=Network(I, J, d, trav),
        costs=CostParams(f, 0.1, beta, gamma, capacity),
        demand=DemandModel(mean=mu, mad=np.zeros_like(mu), lower=0.5 * mu, upper=1.5 * mu),
        horizon=T,
        fleet_limit=J if fleet_limit is None else fleet_limit,
    )


# ---------------------------------------------------------------------------
# demand sampling and MAD estimation
# ---------------------------------------------------------------------------

def lognormal_params(mean: float | np.ndarray, sd: float | np.ndarray):
    """Underlying-normal parameters so the lognormal itself has this mean and sd."""
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    if np.any(mean <= 0):
        raise ValueError("lognormal mean must be positive")
    sigma2 = np.log1p((sd / mean) ** 2)
    return np.log(mean) - 0.5 * sigma2, np.sqrt(sigma2)


def _raw_draws(distribution: str, mu, lo, hi, size, rng, sigma_ratio: float):
    if distribution == "lognormal":
        mu_log, sig_log = lognormal_params(mu, sigma_ratio * np.asarray(mu, dtype=float))
        return rng.lognormal(mean=mu_log, sigma=sig_log, size=size)
    if distribution == "uniform":
        return rng.uniform(lo, hi, size=size)
    if distribution == "two_point":
        pick = rng.integers(0, 2, size=size)
        return np.where(pick == 0, lo, hi)
    raise ValueError(f"unknown distribution {distribution!r}")


def sample_scenarios(instance: Instance, N: int, distribution: str = "lognormal",
                     seed: int = 0, sigma_ratio: float = 0.5) -> ScenarioSet:
    """Draw N demand matrices, clamp them into the support box, round to integers.

    The lognormal is parameterized so the *unclamped* draw has mean mu[i][t]
    and standard deviation sigma_ratio * mu[i][t]; out-of-support draws are
    clamped rather than resampled, preserving the sample count.
    """
    if N < 1:
        raise ValueError("N must be >= 1")
    dem = instance.demand
    rng = np.random.default_rng(seed)
    raw = _raw_draws(distribution, dem.mean, dem.lower, dem.upper,
                     (N,) + dem.mean.shape, rng, sigma_ratio)
    clamped = np.clip(raw, dem.lower, dem.upper)
    return ScenarioSet(np.rint(clamped))


def compute_mad(instance: Instance, distribution: str = "lognormal",
                mc_samples: int = 1_000_000, seed: int = 0,
                sigma_ratio: float = 0.5) -> DemandModel:
    """Estimate the MAD of the clamped-and-rounded demand per cell by Monte Carlo.

    Uses one shared standard draw block across cells (common random numbers),
    then clips each estimate into the feasibility bound of the demand model.
    """
    if mc_samples < 10_000:
        raise ValueError("mc_samples must be at least 10^4")
    dem = instance.demand
    rng = np.random.default_rng(seed)
    I, T = dem.mean.shape
    eta = np.zeros((I, T))
    if distribution == "lognormal":
        z = rng.standard_normal(mc_samples)
    elif distribution == "uniform":
        z = rng.random(mc_samples)
    elif distribution == "two_point":
        z = rng.integers(0, 2, size=mc_samples)
    else:
        raise ValueError(f"unknown distribution {distribution!r}")
    for i in range(I):
        for t in range(T):
            mu, lo, hi = dem.mean[i, t], dem.lower[i, t], dem.upper[i, t]
            if hi <= lo:
                continue
            if distribution == "lognormal":
                mu_log, sig_log = lognormal_params(mu, sigma_ratio * mu)
                draws = np.exp(mu_log + sig_log * z)
            elif distribution == "uniform":
                draws = lo + (hi - lo) * z
            else:
                draws = np.where(z == 0, lo, hi)
            w = np.rint(np.clip(draws, lo, hi))
            eta[i, t] = float(np.mean(np.abs(w - mu)))
    eta = np.minimum(eta, DemandModel(dem.mean, eta, dem.lower, dem.upper).mad_bound())
    return DemandModel(dem.mean.copy(), eta, dem.lower.copy(), dem.upper.copy())


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------

def _canonical_dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def instance_to_dict(instance: Instance) -> dict:
    net, costs, dem = instance.network, instance.costs, instance.demand
    return {
        "schema_version": SCHEMA_VERSION,
        "network": {
            "customer_count": int(net.customer_count),
            "site_count": int(net.site_count),
            "customer_site_distance": net.customer_site_distance.tolist(),
            "site_site_travel_periods": net.site_site_travel_periods.tolist(),
        },
        "costs": {
            "fleet_cost": float(costs.fleet_cost),
            "inconvenience_reward": float(costs.inconvenience_reward),
            "assignment_rate": float(costs.assignment_rate),
            "shortage_penalty": float(costs.shortage_penalty),
            "capacity": float(costs.capacity),
        },
        "demand": {
            "mean": dem.mean.tolist(),
            "mad": dem.mad.tolist(),
            "lower": dem.lower.tolist(),
            "upper": dem.upper.tolist(),
        },
        "horizon": int(instance.horizon),
        "fleet_limit": int(instance.fleet_limit),
    }


def instance_from_dict(doc: dict) -> Instance:
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    net, costs, dem = doc["network"], doc["costs"], doc["demand"]
    return Instance(
        network=Network(int(net["customer_count"]), int(net["site_count"]),
                        np.asarray(net["customer_site_distance"], dtype=float),
                        np.asarray(net["site_site_travel_periods"], dtype=int)),
        costs=CostParams(float(costs["fleet_cost"]), float(costs["inconvenience_reward"]),
                         float(costs["assignment_rate"]), float(costs["shortage_penalty"]),
                         float(costs["capacity"])),
        demand=DemandModel(np.asarray(dem["mean"], dtype=float), np.asarray(dem["mad"], dtype=float),
                           np.asarray(dem["lower"], dtype=float), np.asarray(dem["upper"], dtype=float)),
        horizon=int(doc["horizon"]),
        fleet_limit=int(doc["fleet_limit"]),
    )


def write_instance(instance: Instance, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_dumps(instance_to_dict(instance)))


def read_instance(path) -> Instance:
    with open(path, "r", encoding="utf-8") as fh:
        return instance_from_dict(json.load(fh))


def write_scenarios(scenarios: ScenarioSet, path) -> None:
    doc = {"N": int(scenarios.N),
           "samples": np.asarray(scenarios.samples, dtype=int).tolist()}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(_canonical_dumps(doc))


def read_scenarios(path) -> ScenarioSet:
    with open(path, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    samples = np.asarray(doc["samples"], dtype=float)
    if samples.shape[0] != int(doc["N"]):
        raise ValueError("scenario file N does not match samples")
    return ScenarioSet(samples)
