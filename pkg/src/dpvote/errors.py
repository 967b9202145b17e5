"""Exception types shared across the package.

The CLI maps these onto process exit codes: infeasible budgets exit 3,
data problems exit 4, remote-backend failures exit 5.
"""

from __future__ import annotations


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ContractViolationError(RuntimeError):
    """A stateful object was used outside its documented protocol."""


class InfeasibleBudgetError(ValueError):
    """No number of private releases fits inside the total privacy budget."""


class BudgetExhaustedError(RuntimeError):
    """A private release was requested after the ledger reached zero."""


class InsufficientCorpusError(ValueError):
    """The corpus is smaller than the number of documents a run needs."""


class DataError(ValueError):
    """An input file is missing, malformed, or violates its schema."""


class ContextOverflowError(RuntimeError):
    """A rendered prompt exceeds the generator's context window."""


class BackendError(RuntimeError):
    """A remote generation backend failed or returned an unusable response."""

    def __init__(self, message: str, status: int | None = None, body: str = ""):
        super().__init__(message)
        self.status = status
        self.body_excerpt = body[:200]


class EvaluationError(RuntimeError):
    """An evaluation run failed; the message carries the offending example id."""
