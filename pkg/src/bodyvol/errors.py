"""Exception hierarchy shared by all bodyvol modules.

Each class carries the CLI exit code it maps to so command handlers can
translate failures without a lookup table.
"""


class BodyVolError(Exception):
    exit_code = 1


class InputIOError(BodyVolError):
    exit_code = 2


class ParseError(BodyVolError):
    """Malformed input line. ``line`` is 1-based, or None if unknown."""

    exit_code = 6

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedFaceError(ParseError):
    pass


class FormatError(BodyVolError):
    exit_code = 6


class GeometryError(BodyVolError):
    exit_code = 3


class MeshStructureError(GeometryError):
    pass


class OpenMeshError(GeometryError):
    """Raised when an operation needs a closed, consistently oriented mesh."""

    def __init__(self, message, report=None):
        self.report = report
        super().__init__(message)


class UnsupportedTopologyError(GeometryError):
    pass


class InvalidTransformError(GeometryError):
    pass


class BoundsError(GeometryError):
    pass


class EmptyInputError(BodyVolError):
    exit_code = 4


class DomainError(BodyVolError, ValueError):
    exit_code = 6


class KindMismatchError(BodyVolError):
    exit_code = 6


class UnknownSegmentError(DomainError):
    pass


class MissingPartError(GeometryError):
    pass


class ShapeError(DomainError):
    pass


class ConfigurationError(BodyVolError):
    exit_code = 6


class IdMismatchError(BodyVolError):
    exit_code = 5

    def __init__(self, message, missing=()):
        self.missing = list(missing)
        super().__init__(message)


class ConsistencyError(BodyVolError):
    exit_code = 6
