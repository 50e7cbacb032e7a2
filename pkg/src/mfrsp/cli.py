"""Command-line entry point.

Subcommands: generate, solve, simulate, calibrate, sweep.  Every run writes
its artifacts into a fresh timestamped directory under --output-dir together
with a manifest capturing the fully resolved configuration and seeds.  With
--determinism the time columns of exported traces are zeroed so reruns with
the same seeds are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .ambiguity import Expectation, MeanCVaR
from .decomposition import OPTIMAL, SolveOptions, solve
from .evaluation import (CalibrationResult, DEFAULT_EPSILON_GRID, SimulationSpec,
                         calibrate_epsilon, make_ambiguity_risk, simulate, sweep,
                         sweep_to_csv)
from .instance import (generate_benchmark, generate_lehigh, read_instance,
                       read_scenarios, sample_scenarios, validate, write_instance,
                       write_scenarios)
from .recourse import FirstStagePlan
from .solverapi import SolverConfig, default_threads

log = logging.getLogger("mfrsp")


def _run_dir(base: str, tag: str) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    path = Path(base) / f"{stamp}-{tag}"
    k = 0
    while path.exists():
        k += 1
        path = Path(base) / f"{stamp}-{tag}-{k}"
    path.mkdir(parents=True)
    return path


def _write_manifest(run_dir: Path, args: argparse.Namespace, extra: dict | None = None) -> None:
    doc = {"version": __version__,
           "command": vars(args).copy(),
           "solver_threads_env": os.environ.get("MFRSP_SOLVER_THREADS"),
           "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S")}
    doc["command"].pop("func", None)
    if extra:
        doc.update(extra)
    with open(run_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True, default=str)
        fh.write("\n")


def _solve_options(args) -> SolveOptions:
    return SolveOptions(
        rel_tol=args.tol,
        time_limit=args.time_limit,
        max_iterations=args.max_iterations,
        multi_cut=args.multi_cut,
        lb_inequalities=args.lb_ineq,
        symmetry_breaking=args.sym_break,
        threads=args.threads,
        solver=SolverConfig(time_limit=args.time_limit),
    )


def cmd_generate(args) -> int:
    run_dir = _run_dir(args.output_dir, "generate")
    if args.lehigh is not None:
        inst = generate_lehigh(args.lehigh, horizon=args.T or 10, seed=args.seed,
                               capacity=args.capacity)
        trace = {"lehigh_variant": args.lehigh, "seed": args.seed}
    else:
        if not (args.I and args.J and args.T):
            print("generate: --benchmark requires -I, -J and -T", file=sys.stderr)
            return 2
        inst, trace = generate_benchmark(args.I, args.J, args.T, args.seed,
                                         capacity=args.capacity,
                                         fleet_limit=args.fleet_limit)
    check = validate(inst)
    if not check.ok:
        print("generated instance failed validation:", *check.violations, sep="\n  ",
              file=sys.stderr)
        return 1
    write_instance(inst, run_dir / "instance.json")
    if args.scenarios:
        scen = sample_scenarios(inst, args.scenarios, args.distribution, seed=args.seed)
        write_scenarios(scen, run_dir / "scenarios.json")
    _write_manifest(run_dir, args, {"rng_trace": trace})
    print(run_dir)
    return 0


def cmd_solve(args) -> int:
    run_dir = _run_dir(args.output_dir, f"solve-{args.model}")
    inst = read_instance(args.instance)
    if args.gamma_scale != 1.0:
        inst = inst.with_costs(shortage_penalty=inst.costs.shortage_penalty * args.gamma_scale)
    scen = read_scenarios(args.scenarios) if args.scenarios else None
    amb, risk = make_ambiguity_risk(args.model, inst, scen, epsilon=args.epsilon,
                                    theta=args.theta, kappa=args.kappa)
    options = _solve_options(args)
    if args.export_lp:
        options.export_lp = str(run_dir / "master.lp")
    objective, plan, trace = solve(inst, amb, risk, options)
    with open(run_dir / "plan.json", "w", encoding="utf-8") as fh:
        json.dump(plan.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    with open(run_dir / "objective.json", "w", encoding="utf-8") as fh:
        json.dump({"model": args.model, "objective": objective, "status": trace.status,
                   "iterations": trace.iterations, "fleet_size": plan.fleet_size,
                   "lb": trace.lb, "ub": trace.ub}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    trace.to_csv(run_dir / "trace.csv", zero_times=args.determinism)
    _write_manifest(run_dir, args, {"objective": objective, "status": trace.status})
    print(run_dir)
    print(f"status={trace.status} objective={objective:.6f} fleet={plan.fleet_size} "
          f"iterations={trace.iterations}")
    return 0 if trace.status in (OPTIMAL, "IterationCap", "TimeLimit") else 1


def cmd_simulate(args) -> int:
    run_dir = _run_dir(args.output_dir, "simulate")
    inst = read_instance(args.instance)
    with open(args.plan, "r", encoding="utf-8") as fh:
        plan = FirstStagePlan.from_dict(json.load(fh))
    spec = SimulationSpec(set_id=args.set, n_samples=args.n, delta=args.delta,
                          correlation=args.correlation, seed=args.seed)
    report = simulate(plan, inst, spec, model_opt=args.opt)
    report.to_csv(run_dir / "report.csv")
    _write_manifest(run_dir, args, {"summary": report.summary()})
    print(run_dir)
    summary = report.summary()
    print(f"mean second-stage={summary['second_stage_cost']['mean']:.3f} "
          f"mean disappointment={summary['disappointment']['mean']:.3f}%")
    return 0


def cmd_calibrate(args) -> int:
    run_dir = _run_dir(args.output_dir, "calibrate")
    inst = read_instance(args.instance)
    scen = read_scenarios(args.scenarios)
    grid = DEFAULT_EPSILON_GRID if args.grid == "default" else \
        tuple(float(v) for v in args.grid.split(","))
    options = _solve_options(args)
    result = calibrate_epsilon(inst, scen, grid=grid, folds=args.reps, seed=args.seed,
                               options=options)
    with open(run_dir / "calibration.json", "w", encoding="utf-8") as fh:
        json.dump({"epsilon": result.epsilon, "winners": result.winners,
                   "mean_test_cost": {str(k): v for k, v in result.mean_test_cost.items()}},
                  fh, indent=2, sort_keys=True)
        fh.write("\n")
    _write_manifest(run_dir, args, {"epsilon": result.epsilon})
    print(run_dir)
    print(f"epsilon*={result.epsilon:.4f} winners={result.winners}")
    return 0


def cmd_sweep(args) -> int:
    run_dir = _run_dir(args.output_dir, f"sweep-{args.axis}")
    inst = read_instance(args.instance)
    scen = read_scenarios(args.scenarios) if args.scenarios else None
    values = [float(v) for v in args.values.split(",")]
    models = args.models.split(",")
    options = _solve_options(args)
    rows = sweep(inst, args.axis, values, models, scenarios=scen, epsilon=args.epsilon,
                 theta=args.theta, kappa=args.kappa, options=options)
    sweep_to_csv(rows, run_dir / "sweep.csv")
    _write_manifest(run_dir, args)
    print(run_dir)
    failures = [r for r in rows if r.get("status") == "error"]
    return 0 if not failures else 1


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--output-dir", default="runs", help="base directory for run artifacts")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=default_threads())
    p.add_argument("--determinism", action="store_true",
                   help="zero volatile fields (times) in exported artifacts")
    p.add_argument("--verbose", action="store_true")


def _add_solve_options(p: argparse.ArgumentParser) -> None:
    p.add_argument("--tol", type=float, default=1e-6)
    p.add_argument("--time-limit", type=float, default=3600.0)
    p.add_argument("--max-iterations", type=int, default=10_000)
    p.add_argument("--multi-cut", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--lb-ineq", action=argparse.BooleanOptionalAction, default=True)
    p.add_argument("--sym-break", action=argparse.BooleanOptionalAction, default=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfrsp",
                                     description="Mobile facility fleet sizing, routing "
                                                 "and scheduling under demand uncertainty.")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    g = sub.add_parser("generate", help="generate benchmark or Lehigh-style instances")
    g.add_argument("--benchmark", action="store_true", help="random plane instance")
    g.add_argument("--lehigh", type=int, choices=(1, 2), default=None)
    g.add_argument("-I", type=int, default=None)
    g.add_argument("-J", type=int, default=None)
    g.add_argument("-T", type=int, default=None)
    g.add_argument("--capacity", type=float, default=100.0)
    g.add_argument("--fleet-limit", type=int, default=None)
    g.add_argument("--scenarios", type=int, default=0, help="also sample N scenarios")
    g.add_argument("--distribution", default="lognormal")
    _add_common(g)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("solve", help="solve one model with the decomposition")
    s.add_argument("--model", required=True,
                   choices=("saa", "mad-dro", "w-dro", "saa-cvar", "mad-cvar", "w-cvar"))
    s.add_argument("--instance", required=True)
    s.add_argument("--scenarios", default=None)
    s.add_argument("--epsilon", type=float, default=1.0, help="Wasserstein radius")
    s.add_argument("--theta", type=float, default=0.5, help="mean-CVaR blend weight")
    s.add_argument("--kappa", type=float, default=0.95, help="CVaR tail level")
    s.add_argument("--gamma-scale", type=float, default=1.0,
                   help="scale the shortage penalty before solving")
    s.add_argument("--export-lp", action="store_true")
    _add_solve_options(s)
    _add_common(s)
    s.set_defaults(func=cmd_solve)

    si = sub.add_parser("simulate", help="out-of-sample evaluation of a plan")
    si.add_argument("--instance", required=True)
    si.add_argument("--plan", required=True)
    si.add_argument("--set", type=int, choices=(1, 2), default=1)
    si.add_argument("--delta", type=float, default=0.0)
    si.add_argument("--correlation", type=float, default=0.0)
    si.add_argument("--n", type=int, default=10_000)
    si.add_argument("--opt", type=float, required=True, help="model optimal value")
    _add_common(si)
    si.set_defaults(func=cmd_simulate)

    c = sub.add_parser("calibrate", help="cross-validate the Wasserstein radius")
    c.add_argument("--instance", required=True)
    c.add_argument("--scenarios", required=True)
    c.add_argument("--grid", default="default", help="'default' or comma-separated radii")
    c.add_argument("--reps", type=int, default=30)
    _add_solve_options(c)
    _add_common(c)
    c.set_defaults(func=cmd_calibrate)

    w = sub.add_parser("sweep", help="sensitivity sweep over one parameter axis")
    w.add_argument("--instance", required=True)
    w.add_argument("--axis", required=True, choices=("C", "f", "gamma", "theta"))
    w.add_argument("--values", required=True, help="comma-separated values")
    w.add_argument("--models", default="mad-dro", help="comma-separated model names")
    w.add_argument("--scenarios", default=None)
    w.add_argument("--epsilon", type=float, default=1.0)
    w.add_argument("--theta", type=float, default=0.5)
    w.add_argument("--kappa", type=float, default=0.95)
    _add_solve_options(w)
    _add_common(w)
    w.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    np.seterr(all="raise", under="ignore")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
