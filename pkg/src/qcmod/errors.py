"""Exception taxonomy shared by all qcmod modules."""


class QcmodError(Exception):
    """Base class for all qcmod errors."""


class ValidationError(QcmodError):
    """Invalid input data: bad norm parameters, malformed JSON, shape mismatch."""

    def __init__(self, message, errors=None):
        super().__init__(message)
        # Optional list of individual problems (used by config parsing, which
        # reports every violation rather than the first one).
        self.errors = list(errors) if errors else [str(message)]


class CondenserError(ValidationError):
    """The projection pair fails to be a condenser (PQ != 0, non-projections)."""


class NumericError(QcmodError):
    """A linear-algebra kernel failed (non-convergent SVD/eigendecomposition)."""
