"""Yield estimation and multi-objective design optimization toolkit."""

from .constants import NOMINAL_DESIGN, TAU_NOMINAL, TAU_PFS_DEFAULT
from .evaluator import ScalarizedObjective, YieldEvaluator, YieldProblem, default_problem
from .external import (
    ExternalModel,
    ExternalModelExit,
    ExternalModelProtocolError,
    ExternalModelTimeout,
    external_evaluate,
)
from .gpr import DuplicateInputError, GprConfig, GprModel, fit, predict, rbf_kernel, update
from .hybrid import (
    HybridConfig,
    HybridReport,
    build_initial_training,
    classify,
    estimate_yield_hybrid,
)
from .montecarlo import (
    SampleSet,
    YieldEstimate,
    derive_seed,
    latin_hypercube,
    mc_sigma,
    mc_yield,
    sample_size_for,
    sample_uniform,
)
from .nsga2 import GaConfig, Generation, crowding_distance, non_dominated_sort, nsga2_run
from .optimize import (
    MultiStartConfig,
    OptimRun,
    delta_f,
    dfo_minimize,
    feasible_starts,
    multi_start,
    solve_eps_constraint,
    solve_weighted_sum,
    solve_ws_multistart,
)
from .pareto import (
    ObjectivePoint,
    ParetoArchive,
    dominates,
    eps_feasible,
    pareto_front,
    weighted_sum,
    weighted_sum_objective,
)
from .problem import (
    DesignConstraints,
    DesignVector,
    FeasibilityReport,
    PerformanceSpec,
    QoiModel,
    SyntheticPmsm,
    UncertainParameter,
    UncertaintySpec,
    check_constraints,
    cost,
    default_pmsm_uncertainty,
    nominal_design,
)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
