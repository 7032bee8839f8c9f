"""Exception hierarchy shared by all modules."""


class IIMError(Exception):
    """Base class for every error raised by the package."""


class InvalidInputError(IIMError, ValueError):
    """Arguments violate a documented precondition."""


class NotFoundError(IIMError, KeyError):
    """A registry lookup (case id, preset name) failed."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


class StepBudgetError(IIMError, RuntimeError):
    """The requested integration needs more steps than ``max_steps``."""


class DivergenceError(IIMError, ArithmeticError):
    """A characteristic produced a non-finite state."""


class EvaluationError(IIMError, ArithmeticError):
    """An integrand returned a non-finite value at a quadrature node."""
