"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument violates an operation's stated domain."""


class DesignError(DomainError):
    """A design or outcome table is internally inconsistent."""


class BudgetExhaustedError(RuntimeError):
    """A release was refused because it would exceed the budget cap."""

    def __init__(self, requested: float, remaining: float):
        self.requested = requested
        self.remaining = remaining
        super().__init__(
            f"privacy budget exhausted: requested {requested:g}, "
            f"remaining {remaining:g}"
        )


class UnsupportedPriorOperation(TypeError):
    """The prior family does not support the requested operation."""
