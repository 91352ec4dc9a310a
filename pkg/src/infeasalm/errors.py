"""Exception hierarchy for the solvers, oracles and file readers."""


class InfeasAlmError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(InfeasAlmError, ValueError):
    """A vector or matrix does not have the expected shape."""


class SingularProjectorError(InfeasAlmError):
    """An affine set has a rank-deficient ``A A^T`` and cannot be projected onto."""


class ModelError(InfeasAlmError, ValueError):
    """A program violates a structural rule (e.g. nonconvex inequality block).

    ``rule`` names the violated rule so that file readers can report it.
    """

    def __init__(self, message, rule=None):
        super().__init__(message)
        self.rule = rule


class InfeasibleEliminationError(InfeasAlmError):
    """The equality system to eliminate is inconsistent."""


class NotStronglyConvexError(InfeasAlmError):
    """The objective Hessian is singular where strict convexity is needed."""


class ScheduleRejectedError(InfeasAlmError):
    """A step-size / error schedule fails one of the assumption checks."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class OracleError(InfeasAlmError):
    """An exact prox or conjugate computation found no consistent solution."""


class ConjugateInfiniteError(InfeasAlmError):
    """The conjugate is infinite at the requested point."""


class InnerSolveError(InfeasAlmError):
    """The inner solver hit its iteration cap before reaching its tolerance."""

    def __init__(self, message, x=None, residual=None, iters=None):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iters = iters


class UnboundedInnerError(InfeasAlmError):
    """The augmented-Lagrangian subproblem is unbounded below."""

    def __init__(self, message, x=None, value=None, iters=None):
        super().__init__(message)
        self.x = x
        self.value = value
        self.iters = iters


class UnsupportedError(InfeasAlmError):
    """The reference method does not apply to this program."""


class InfeasibleError(InfeasAlmError):
    """No feasible KKT candidate exists."""


class ConfigError(InfeasAlmError, ValueError):
    """Invalid configuration (empty grid, bad spec string, ...)."""


class FitError(InfeasAlmError):
    """A rate fit was requested on a series with nonpositive values."""


class ProblemFileError(InfeasAlmError, ValueError):
    """A problem file could not be parsed or validated."""

    def __init__(self, message, field=None, rule=None):
        super().__init__(message)
        self.field = field
        self.rule = rule
