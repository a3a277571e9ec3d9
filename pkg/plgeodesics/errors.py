"""Exception hierarchy shared by the library and the CLI.

Input problems derive from ``InvalidInput`` (CLI exit code 2), computations
that leave their domain derive from ``NumericalAbort`` (CLI exit code 3).
"""


class PLGeodesicsError(Exception):
    """Base class of every error raised by plgeodesics."""


class InvalidInput(PLGeodesicsError, ValueError):
    pass


class GridMismatch(InvalidInput):
    pass


class NotMeanZero(InvalidInput):
    pass


class NotSumZero(InvalidInput):
    pass


class NotDsMeanZero(InvalidInput):
    pass


class ConstraintViolation(InvalidInput):
    pass


class PointOnCurve(InvalidInput):
    pass


class SchemaError(InvalidInput):
    """A document does not match the schema; ``path`` names the offending field."""

    def __init__(self, message: str, path: str = ""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path


class ValidationError(InvalidInput):
    """A well-formed document violates one of its declared invariants."""

    def __init__(self, message: str, invariant: str = ""):
        super().__init__(f"[{invariant}] {message}" if invariant else message)
        self.invariant = invariant


class NumericalAbort(PLGeodesicsError, ArithmeticError):
    pass


class DegenerateEdge(NumericalAbort):
    """An edge length fell below the immersion guard."""

    def __init__(self, message: str, time: float | None = None, min_edge: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time
        self.min_edge = min_edge


class DegenerateLandmarks(NumericalAbort):
    """Two landmarks came closer than the collision guard."""

    def __init__(self, message: str, time: float | None = None, min_distance: float | None = None):
        super().__init__(message if time is None else f"{message} (t={time:.6g})")
        self.time = time
        self.min_distance = min_distance


class NoConvergence(NumericalAbort):
    def __init__(self, message: str, iterations: int = 0, residual: float = float("nan")):
        super().__init__(f"{message} after {iterations} iterations (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual
