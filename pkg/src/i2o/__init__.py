"""Inner-iterations-overfitting toolkit.

Affine fixed-point procedures in closed form, residual polynomials of
gradient-based methods, outer trainers (closed form, unrolled, implicit
differentiation), the loss-gap lower bound with its overparametrized and
average-case regimes, a stacked meta-learning factorization, and a
deterministic CLI experiment harness.
"""

from .inner import (
    AffineInnerProblem,
    FixedPointConfig,
    LinearProcedure,
    closed_form_limit,
    closed_form_state,
    default_step_size,
    invertibility_threshold,
    iterate,
    validate,
)
from .linops import SeededSource, gaussian_matrix, pinv, proj_range, spectrum
from .metalin import LinearTask, MetaConfig, build_inner, build_outer, meta_sweep
from .outer import (
    QuadraticOuterLoss,
    TrainedOuter,
    characterization_residual,
    ift_gradient,
    ift_step_size,
    loss,
    loss_at,
    train_closed_form,
    train_ift,
    train_unrolled_gd,
)
from .respoly import (
    GradientMethod,
    ResidualPolynomial,
    momentum_n0,
    procedure_from_quadratic,
    quadratic_iterate,
    residual_poly,
)
from .theory import (
    AvgCaseReport,
    BoundViolationError,
    I2OReport,
    avg_case_rhs,
    d_gap,
    lower_bound,
    monte_carlo_avg_case,
    non_strongly_convex_scan,
    sweep,
)

__version__ = "0.1.0"

__all__ = [
    "AffineInnerProblem",
    "AvgCaseReport",
    "BoundViolationError",
    "FixedPointConfig",
    "GradientMethod",
    "I2OReport",
    "LinearProcedure",
    "LinearTask",
    "MetaConfig",
    "QuadraticOuterLoss",
    "ResidualPolynomial",
    "SeededSource",
    "TrainedOuter",
    "avg_case_rhs",
    "build_inner",
    "build_outer",
    "characterization_residual",
    "closed_form_limit",
    "closed_form_state",
    "d_gap",
    "default_step_size",
    "gaussian_matrix",
    "ift_gradient",
    "ift_step_size",
    "invertibility_threshold",
    "iterate",
    "loss",
    "loss_at",
    "lower_bound",
    "meta_sweep",
    "momentum_n0",
    "monte_carlo_avg_case",
    "non_strongly_convex_scan",
    "pinv",
    "proj_range",
    "procedure_from_quadratic",
    "quadratic_iterate",
    "residual_poly",
    "spectrum",
    "sweep",
    "train_closed_form",
    "train_ift",
    "train_unrolled_gd",
    "validate",
]
