"""Custom exception classes for the SFPE solver."""

from typing import Any, Iterable, Optional


class SfpeError(Exception):
    """Base exception for all solver related errors."""
    pass


class ExpressionError(SfpeError):
    """Exception raised when a coefficient expression is malformed."""
    pass


class ExpressionSyntaxError(ExpressionError):
    """Exception raised when an expression does not match the grammar."""

    def __init__(self, message: str, position: int, expected: Iterable[str] = (),
                 source: Optional[str] = None):
        self.position = position
        self.expected = frozenset(expected)
        self.source = source
        self.context: Optional[str] = None
        self.reason = message
        super().__init__(self._render())

    def with_context(self, context: str) -> "ExpressionSyntaxError":
        """Attach file/field context and refresh the message."""
        self.context = context
        self.args = (self._render(),)
        return self

    def _render(self) -> str:
        text = f"{self.reason} at column {self.position}"
        if self.expected:
            text += f" (expected one of: {', '.join(sorted(self.expected))})"
        if self.context:
            text = f"{self.context}: {text}"
        return text


class ArityError(ExpressionError):
    """Exception raised when a builtin is called with the wrong argument count."""

    def __init__(self, name: str, expected: str, received: int):
        self.name = name
        self.expected = expected
        self.received = received
        super().__init__(f"{name}() takes {expected} argument(s), got {received}")


class UnknownIdentifierError(ExpressionError):
    """Exception raised for identifiers outside the expression vocabulary."""

    def __init__(self, name: str, reason: str = "unknown identifier"):
        self.name = name
        super().__init__(f"{reason}: '{name}'")


class BindingError(ExpressionError):
    """Exception raised when bindings do not match the expression."""
    pass


class NumericalError(SfpeError):
    """Base exception for failures inside numerical routines."""
    pass


class DomainError(NumericalError):
    """Exception raised when an operation leaves its mathematical domain."""

    def __init__(self, message: str, node: Any = None):
        self.node = node
        if node is not None:
            message += f" in '{node}'"
        super().__init__(message)


class NonFiniteError(NumericalError):
    """Exception raised when a computation produces NaN or Inf."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        if step is not None:
            message += f" at step {step}"
        super().__init__(message)


class ValueOverflowError(NumericalError):
    """Exception raised when a value exceeds the floating-point range."""
    pass


class BudgetExceededError(NumericalError):
    """Exception raised when an estimator would exceed its work budget."""

    def __init__(self, estimated: float, budget: float):
        self.estimated = estimated
        self.budget = budget
        super().__init__(
            f"Estimated work {estimated:.3g} exceeds budget {budget:.3g} coefficient evaluations"
        )


class CflViolationError(NumericalError):
    """Exception raised when an explicit scheme would be unstable."""

    def __init__(self, message: str, required_nt: int):
        self.required_nt = required_nt
        super().__init__(f"{message}; use nt >= {required_nt}")


class ProbeOutOfRangeError(NumericalError):
    """Exception raised when a comparison probe lies outside the grid."""
    pass


class ConfigurationError(SfpeError):
    """Exception raised when configuration is invalid."""
    pass


class SchemaError(ConfigurationError):
    """Exception raised when a problem file violates the schema."""

    def __init__(self, field: str, reason: str):
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class AdmissibilityFailure(SfpeError):
    """Exception raised when a problem fails its admissibility profile."""

    def __init__(self, failed_checks: Iterable[str], report: Optional[dict] = None):
        self.failed_checks = list(failed_checks)
        self.report = report
        super().__init__(f"Admissibility checks failed: {', '.join(self.failed_checks)}")
