"""Exception hierarchy shared across the toolkit."""


class AuditError(Exception):
    """Base class for all toolkit errors."""


class SchemaError(AuditError):
    """A required column, key, or file structure is missing or malformed."""


class ParseError(AuditError):
    """A cell could not be parsed; message includes the row index."""


class ValidationError(AuditError):
    """Data violates a declared invariant (e.g. a binary property outside {0,1})."""


class InsufficientDataError(AuditError):
    """Too few samples (or pixels) to compute a meaningful result."""


class DegenerateInputError(AuditError):
    """Input is degenerate for the operation (all points identical, coincident landmarks)."""


class NumericalError(AuditError):
    """A linear solve or similar numeric step failed; message suggests a remedy."""
