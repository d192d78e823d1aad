"""Exception and warning types shared across the package.

Two error families matter for the CLI exit-code contract: ``ValidationError``
covers bad arguments, broken invariants and malformed configuration (exit
code 1), while ``FileFormatError`` and plain ``OSError`` cover everything on
the file I/O path (exit code 2).
"""


class ReidrankError(Exception):
    """Base class for all package errors."""


class ValidationError(ReidrankError):
    """Invalid argument, inconsistent input data, or broken invariant."""


class ZeroRowError(ValidationError):
    """A row with (near-)zero L2 norm cannot be normalized."""

    def __init__(self, row: int, norm: float = 0.0):
        super().__init__(f"row {row} has L2 norm {norm:.3e} and cannot be normalized")
        self.row = row
        self.norm = norm


class DimensionMismatchError(ValidationError):
    """Operands disagree on descriptor dimension."""


class EmptySubsetError(ValidationError):
    """An operation received an empty row subset."""


class InconsistentEnsembleError(ValidationError):
    """Ensemble members disagree on shape or row identifiers."""


class GalleryTooSmallError(ValidationError):
    """Gallery has fewer rows than a neighborhood operation requires."""


class EmptyEvalError(ValidationError):
    """Evaluation received no scorable queries."""


class InvalidSpecError(ValidationError):
    """Synthetic dataset specification violates its constraints."""


class StageOrderError(ValidationError):
    """Pipeline stage chain is invalid."""


class FileFormatError(ReidrankError):
    """Base class for errors in the on-disk file formats."""


class MalformedHeaderError(FileFormatError):
    """Sidecar/header document is unreadable or inconsistent."""


class LengthMismatchError(FileFormatError):
    """Declared sizes do not match the actual payload."""


class DuplicateIdError(FileFormatError):
    """An identifier appears more than once where uniqueness is required."""


class NotConvergedWarning(UserWarning):
    """Iterative solver hit its iteration cap above tolerance."""


class DisconnectedNodeWarning(UserWarning):
    """Affinity graph contains zero-degree nodes."""


class ClampedParameterWarning(UserWarning):
    """A neighborhood size was clamped to the available data."""


class SkippedQueryWarning(UserWarning):
    """Queries without relevant gallery items were excluded from scoring."""
