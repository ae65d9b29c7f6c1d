"""Exception hierarchy shared by the solver, diagnostics and optimizer."""


class PVDError(Exception):
    """Base class for every error raised by this package."""


class DomainError(PVDError, ValueError):
    """A composition lies outside the admissible simplex."""


class DegenerateCell(PVDError):
    """All positive parts vanish at a cell, so normalization is undefined."""

    def __init__(self, message, cell=None, step=None):
        super().__init__(message)
        self.cell = cell
        self.step = step


class NonConvergence(PVDError):
    """Newton iterations exhausted without meeting the residual tolerance."""

    def __init__(self, message, residual=float("nan"), step=None):
        super().__init__(message)
        self.residual = residual
        self.step = step


class SingularJacobian(PVDError):
    """The Newton linear system could not be factored."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class DegenerateFit(PVDError):
    """A decay quantity cannot be fitted because its denominator vanishes."""


class NonDifferentiablePoint(PVDError):
    """Clipping or bound activity makes the discrete cost one-sided."""


class LineSearchFailure(PVDError):
    """Backtracking exhausted its halvings without sufficient decrease.

    ``report`` carries the best iterate reached before the failure.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class ParseError(PVDError):
    """Syntax or type problem in a run configuration file."""

    def __init__(self, message, lineno=None, path=None):
        where = ""
        if path is not None:
            where = f"{path}:"
        if lineno is not None:
            where += f"{lineno}:"
        super().__init__(f"{where} {message}" if where else message)
        self.lineno = lineno
        self.path = path


class ValidationError(PVDError, ValueError):
    """A configuration parsed but violates a model invariant."""


class SchemaError(PVDError):
    """A CSV file does not have the columns a command expects."""
