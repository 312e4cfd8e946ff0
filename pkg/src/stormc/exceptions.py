"""Exception hierarchy shared by every stormc module."""


class StormError(Exception):
    """Base class for all errors raised by stormc."""


class InvalidProblemError(StormError, ValueError):
    """A problem oracle or its data is malformed (empty pool, bad matrix, ...)."""


class InvalidArgumentError(StormError, ValueError):
    """An argument violates a documented precondition."""


class InvalidConstantsError(StormError, ValueError):
    """Problem constants make a planner formula undefined (zero denominators)."""


class InfeasibleEpsilonError(StormError, ValueError):
    """Target precision lies outside the window where the exact plan is valid."""

    def __init__(self, eps, upper):
        self.eps = eps
        self.upper = upper
        super().__init__(
            f"eps={eps!r} outside the admissible window 0 < eps < {upper!r}"
        )


class DomainViolationError(StormError, ArithmeticError):
    """A component function was evaluated outside its domain."""

    def __init__(self, message, index=None):
        self.index = index
        super().__init__(message)


class NumericalFailure(StormError, FloatingPointError):
    """Non-finite values appeared during a run.

    ``iteration`` is the iteration at which the failure was detected and
    ``record`` holds the partial run record, when one exists.
    """

    def __init__(self, message, iteration=None, record=None):
        self.iteration = iteration
        self.record = record
        if iteration is not None:
            message = f"{message} (iteration {iteration})"
        super().__init__(message)


class ConfigError(StormError, ValueError):
    """Experiment configuration failed schema validation."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class BoundViolationError(StormError, AssertionError):
    """A provable per-iteration bound was violated during a run."""

    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)
