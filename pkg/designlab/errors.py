"""
Exception hierarchy shared by the library, the CLI and the HTTP layer.

The CLI turns these into its exit-code contract (see ``designlab.cli``); the
API turns them into HTTP status codes (see ``designlab.main``).
"""


class DesignLabError(Exception):
    pass


class DimensionError(DesignLabError, ValueError):
    """Operands whose shapes or subsystem dimensions do not agree."""


class PreconditionError(DesignLabError, ValueError):
    """A hard precondition of an operation or bound does not hold."""


class InvariantViolation(DesignLabError, ValueError):
    """A quantum-state or ensemble invariant is broken beyond tolerance."""


class BudgetExceeded(DesignLabError):
    """A dimension cap or enumeration budget would be exceeded."""


class ConvergenceError(DesignLabError, RuntimeError):
    """An iterative solver stopped without meeting its tolerance."""


class UnknownNameError(DesignLabError, LookupError):
    """No builtin ensemble, bound or run goes by the requested name."""
