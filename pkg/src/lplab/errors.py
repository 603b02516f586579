"""Exception types shared across the package.

Validation errors mean the caller handed us something outside a documented
precondition; numerical errors mean a computation that was supposed to
succeed did not (singular systems, non-convergent iterations, degenerate
fits).  The CLI maps the two classes to distinct exit codes.
"""


class ValidationError(ValueError):
    """An input violates a documented precondition."""


class NumericalError(RuntimeError):
    """A numerical procedure failed and the result cannot be trusted."""


class SingularSystemError(NumericalError):
    """A linear system factorization failed or produced a non-finite solution."""


class PolicyIterationError(NumericalError):
    """Policy iteration did not reach a fixed point within the sweep budget."""


class DegenerateDataError(NumericalError):
    """Data is too degenerate to fit (e.g. a flat tail in a log-log fit)."""
