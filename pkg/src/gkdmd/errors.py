"""Exception hierarchy shared by all gkdmd modules."""


class GKDMDError(Exception):
    """Base class for every error raised by this package."""


class InputError(GKDMDError, ValueError):
    """Malformed or inconsistent user input (shapes, parameters, configs)."""


class NumericError(GKDMDError, ArithmeticError):
    """A numerical routine failed (non-convergence, non-finite values)."""


class ModelError(GKDMDError):
    """A fitted model violates one of its structural invariants."""


class MetricError(GKDMDError):
    """The reconstruction error metric is undefined for the given data."""


class ModelIOError(GKDMDError, OSError):
    """A model or dataset file could not be read or validated."""
