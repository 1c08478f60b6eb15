"""Exception types shared across the package."""


class MarginBnError(Exception):
    """Base class for all package-level errors."""


class DataError(MarginBnError):
    """Raised for malformed, missing, or schema-violating input data."""


class ModelError(MarginBnError):
    """Raised for ill-formed catalogs, selection vectors, or MILP inputs."""


class SolverError(MarginBnError):
    """Raised when the LP backend fails numerically; never a silent wrong answer."""
