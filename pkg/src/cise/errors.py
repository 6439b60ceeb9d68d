"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 2, data-format
errors 3, external-service errors 4, anything else 5.
"""


class CiseError(Exception):
    """Base class for all package errors."""


class UsageError(CiseError):
    """Caller violated a precondition (bad argument, mismatched inputs)."""


class DataFormatError(CiseError):
    """A file or payload does not conform to its declared format."""


class ExternalServiceError(CiseError):
    """An HTTP endpoint failed, misbehaved, or returned a malformed payload."""
