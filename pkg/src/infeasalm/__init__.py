"""Augmented Lagrangian and proximal point methods on possibly infeasible convex programs.

The package tracks where the iterates go when the constraints cannot be met:
the constraint violation converges to the minimal-norm feasible shift and the
objective to the value of the closest feasible problem.
"""

__version__ = "0.1.0"

from ._backend import BACKEND
from .errors import (
    ConfigError,
    ConjugateInfiniteError,
    DimensionError,
    FitError,
    InfeasAlmError,
    InnerSolveError,
    ModelError,
    OracleError,
    ProblemFileError,
    ScheduleRejectedError,
    UnboundedInnerError,
)
from .fileio import read_problem, write_problem
from .ialm import IalmOptions, IalmRun, attach_reference, crosscheck_ippa_equivalence, ialm_step, run_ialm
from .ippa import (
    ErrorInjector,
    LinearOracle,
    MaxAffineOracle,
    QuadraticOracle,
    diagnostics,
    ippa_step,
    prox,
    run_ippa,
)
from .model import (
    Constraint,
    ConvexProgram,
    QuadraticFn,
    affine_rows_program,
    build_program,
    dual_oracle_equality_qp,
    qcqp_example,
    reparameterize_equalities,
)
from .oracle import (
    ClosestFeasibleReference,
    active_set_qp_solve,
    fit_rate,
    grid_closest_feasible,
    least_squares_min_violation,
)
from .schedules import (
    Constant,
    Geometric,
    LogPoly,
    Polynomial,
    PowerLaw,
    Schedule,
    Verdict,
    Zero,
    parse_schedule,
    validate_assumptions,
)
from .sets import DomainSet, ProductSet, SetBlock, contains, dist_sq, project

__all__ = [
    "__version__",
    "BACKEND",
    "ConfigError",
    "ConjugateInfiniteError",
    "DimensionError",
    "FitError",
    "InfeasAlmError",
    "InnerSolveError",
    "ModelError",
    "OracleError",
    "ProblemFileError",
    "ScheduleRejectedError",
    "UnboundedInnerError",
    "read_problem",
    "write_problem",
    "IalmOptions",
    "IalmRun",
    "attach_reference",
    "crosscheck_ippa_equivalence",
    "ialm_step",
    "run_ialm",
    "ErrorInjector",
    "LinearOracle",
    "MaxAffineOracle",
    "QuadraticOracle",
    "diagnostics",
    "ippa_step",
    "prox",
    "run_ippa",
    "Constraint",
    "ConvexProgram",
    "QuadraticFn",
    "affine_rows_program",
    "build_program",
    "dual_oracle_equality_qp",
    "qcqp_example",
    "reparameterize_equalities",
    "ClosestFeasibleReference",
    "active_set_qp_solve",
    "fit_rate",
    "grid_closest_feasible",
    "least_squares_min_violation",
    "Constant",
    "Geometric",
    "LogPoly",
    "Polynomial",
    "PowerLaw",
    "Schedule",
    "Verdict",
    "Zero",
    "parse_schedule",
    "validate_assumptions",
    "DomainSet",
    "ProductSet",
    "SetBlock",
    "contains",
    "dist_sq",
    "project",
]
