"""Ivanov regularization of nonlinear inverse problems via trust-region subproblems."""
from .errors import (
    ConfigError, EigenSolverError, InvalidGridError, NonConvergenceError, OuterConvergenceError,
    QuasitrustError, StagnationError, TrsConvergenceError, WeightMismatchError,
)
from .ivanov import (
    ExperimentRecord, InnerState, OuterState, SolverOptions, Tolerances, check_posdef,
    inner_solve, newton_radius_update, outer_solve,
)
from .linalg import (
    EigenPair, SymOperator, WeightedVector, euclidean_to_weighted, smallest_eigenpair,
    trapezoid_weights, weighted_to_euclidean,
)
from .model import QuadraticModel, ResidualFunctional, build_trs, eval_residual, gradient, hessian_action
from .problems import CubicVolterra, ForwardProblem, NoisySetup, QuarticExample, example_1d, make_noisy
from .trs import TrsProblem, TrsSolution, eval_k, eval_psi, solve_trs, solve_trs_oracle

__version__ = "0.1.0"

__all__ = [
    "ConfigError", "EigenSolverError", "InvalidGridError", "NonConvergenceError",
    "OuterConvergenceError", "QuasitrustError", "StagnationError", "TrsConvergenceError",
    "WeightMismatchError",
    "ExperimentRecord", "InnerState", "OuterState", "SolverOptions", "Tolerances",
    "check_posdef", "inner_solve", "newton_radius_update", "outer_solve",
    "EigenPair", "SymOperator", "WeightedVector", "euclidean_to_weighted", "smallest_eigenpair",
    "trapezoid_weights", "weighted_to_euclidean",
    "QuadraticModel", "ResidualFunctional", "build_trs", "eval_residual", "gradient", "hessian_action",
    "CubicVolterra", "ForwardProblem", "NoisySetup", "QuarticExample", "example_1d", "make_noisy",
    "TrsProblem", "TrsSolution", "eval_k", "eval_psi", "solve_trs", "solve_trs_oracle",
]
