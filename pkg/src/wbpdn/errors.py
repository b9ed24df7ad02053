"""Exception hierarchy shared by all modules."""


class WbpdnError(Exception):
    """Base class for package errors."""


class InputError(WbpdnError, ValueError):
    """Invalid arguments: bad indices, shapes, ranges or infeasible combinations."""


class NumericalError(WbpdnError, ArithmeticError):
    """A NaN or Inf appeared during an iterative computation."""


class ResourceError(WbpdnError):
    """A requested computation exceeds its configured enumeration cap."""


class CertificateError(WbpdnError):
    """A bound was requested for inputs that do not satisfy its recovery condition."""
