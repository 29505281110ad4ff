"""Exception hierarchy.

Every error raised on purpose by the package derives from ``RIVError``. Most
also subclass ``ValueError`` so callers that only care about bad input can
catch the builtin.
"""


class RIVError(Exception):
    """Base class for all package errors."""


class SchemaError(RIVError, ValueError):
    """A column named in the schema is missing or the schema is malformed."""


class ParseError(RIVError, ValueError):
    """A cell could not be parsed as a finite number."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column


class DimensionError(RIVError, ValueError):
    """Too few observations, or arrays with inconsistent shapes."""


class MatrixError(RIVError, ValueError):
    """A Gram matrix is asymmetric or not positive definite."""


class ValidationError(RIVError, ValueError):
    """A scalar input violates a documented bound."""


class SingularDesignError(MatrixError):
    """The design matrix ``W = (Z, X)`` does not have full column rank."""


class UnsupportedError(RIVError):
    """The requested operation needs data that is not available."""


class NoRelevantInstrumentsError(RIVError):
    """No instrument passes the relevance threshold."""


class SelectionError(RIVError, ValueError):
    """An index set is empty or not contained in its parent set."""


class CovarianceError(RIVError):
    """A covariance matrix is inconsistent or cannot be factorized."""


class TuningError(RIVError):
    """The shrinkage parameter search exhausted its step budget."""

    def __init__(self, message, fractions=None):
        super().__init__(message)
        self.fractions = list(fractions or [])
