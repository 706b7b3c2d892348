"""Exception hierarchy shared by all solver modules."""


class PFSIError(Exception):
    """Base class for every error raised by the simulator."""


class GeometryError(PFSIError):
    pass


class DisplacementExceedsTube(GeometryError):
    pass


class NonInvertible(GeometryError):
    pass


class SingularJacobian(GeometryError):
    pass


class OutOfDomain(GeometryError):
    pass


class NumericalFailure(PFSIError):
    """A discretization produced a state that the scheme should never reach."""


class TubeBreach(NumericalFailure):
    """Shell displacement left the admissible band; the run must stop."""

    def __init__(self, message, max_displacement=None, limit=None):
        super().__init__(message)
        self.max_displacement = max_displacement
        self.limit = limit


class LinearSolveFailure(NumericalFailure):
    pass


class ProjectionSolveFailure(LinearSolveFailure):
    pass


class CFLViolation(NumericalFailure):
    def __init__(self, message, courant=None, limit=None):
        super().__init__(message)
        self.courant = courant
        self.limit = limit


class NegativeDensity(NumericalFailure):
    pass


class SymmetryLoss(NumericalFailure):
    pass


class TruncationTooSmall(PFSIError):
    pass


class NoContraction(PFSIError):
    def __init__(self, message, ratios=()):
        super().__init__(message)
        self.ratios = list(ratios)


class InadmissibleExponents(PFSIError):
    pass


class ConfigError(PFSIError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, line=None, column=None):
        where = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + where)
        self.line = line
        self.column = column


class ValidationError(ConfigError):
    def __init__(self, field, constraint):
        super().__init__(f"invalid value for {field!r}: {constraint}")
        self.field = field
        self.constraint = constraint


class SnapshotError(PFSIError):
    pass


class CorruptSnapshot(SnapshotError):
    pass


class VersionMismatch(SnapshotError):
    pass
