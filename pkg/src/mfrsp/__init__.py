"""Mobile facility fleet sizing, routing and scheduling under demand uncertainty.

A numpy/scipy solver suite for the two-stage problem of sizing a fleet of
mobile facilities, scheduling their sites over a horizon, and assigning
random demand, with four uncertainty models (sample average, moment-based
robust, Wasserstein-ball robust, and their mean-CVaR variants) solved by one
cutting-plane decomposition, plus an out-of-sample evaluation harness.
"""

__version__ = "0.1.0"

from .ambiguity import (MAD, SAA, Expectation, MeanCVaR, Wasserstein,
                        mad_worstcase_expectation_oracle, mad_worstcase_support_count,
                        wasserstein_distance_1)
from .decomposition import DecompositionTrace, SolveOptions, evaluate_plan, solve
from .evaluation import (CalibrationResult, EvaluationReport, SimulationSpec,
                         calibrate_epsilon, correlated_sampler, simulate, sweep)
from .instance import (CostParams, DemandModel, Instance, Network, ScenarioSet,
                       ValidationResult, compute_mad, generate_benchmark,
                       generate_lehigh, read_instance, read_scenarios,
                       sample_scenarios, validate, write_instance, write_scenarios)
from .models import MasterOptions, build_master
from .recourse import (FirstStagePlan, RecourseDual, RecourseSolution,
                       extensive_form_value, plan_in_region, recourse_lower_bound,
                       solve_recourse, solve_recourse_dual)
from .separation import (SeparationResult, extract_cuts, separate_mad,
                         separate_saa, separate_wasserstein)
from .solverapi import SolverConfig, SolverError

__all__ = [
    "MAD", "SAA", "Expectation", "MeanCVaR", "Wasserstein",
    "mad_worstcase_expectation_oracle", "mad_worstcase_support_count",
    "wasserstein_distance_1", "DecompositionTrace", "SolveOptions",
    "evaluate_plan", "solve", "CalibrationResult", "EvaluationReport",
    "SimulationSpec", "calibrate_epsilon", "correlated_sampler", "simulate",
    "sweep", "CostParams", "DemandModel", "Instance", "Network", "ScenarioSet",
    "ValidationResult", "compute_mad", "generate_benchmark", "generate_lehigh",
    "read_instance", "read_scenarios", "sample_scenarios", "validate",
    "write_instance", "write_scenarios", "MasterOptions", "build_master",
    "FirstStagePlan", "RecourseDual", "RecourseSolution", "extensive_form_value",
    "plan_in_region", "recourse_lower_bound", "solve_recourse",
    "solve_recourse_dual", "SeparationResult", "extract_cuts", "separate_mad",
    "separate_saa", "separate_wasserstein", "SolverConfig", "SolverError",
]
