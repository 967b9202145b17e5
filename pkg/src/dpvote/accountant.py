"""Privacy-budget accounting.

Computes how many private token releases fit inside a total budget under
the better of sequential and advanced composition, and tracks consumption
while a generation loop runs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

from .errors import BudgetExhaustedError, InfeasibleBudgetError
from .mechanisms import PrivacyBudget

# Hard cap on the advanced-composition linear scan; the function runs once
# per generation, so exactness beats cleverness.
_SCAN_CAP = 10**6


class CompositionRule(Enum):
    SEQUENTIAL = "sequential"
    ADVANCED = "advanced"


@dataclass(frozen=True)
class CompositionPlan:
    """The winning composition rule and the step count it affords."""

    per_token: PrivacyBudget
    total: PrivacyBudget
    max_steps: int
    rule_used: CompositionRule


def _ratio_cap(unit: float, budget: float) -> float:
    """Largest integer T >= 0 with T * unit <= budget, exact in float terms."""
    if unit <= 0:
        return math.inf
    t = max(0, int(budget / unit))
    while t > 0 and t * unit > budget:
        t -= 1
    while (t + 1) * unit <= budget:
        t += 1
    return t


def sequential_max(per_token: PrivacyBudget, total: PrivacyBudget) -> int:
    """Steps affordable under sequential composition: T eps0 <= eps and
    T delta0 <= delta. Zero means infeasible."""
    cap = min(_ratio_cap(per_token.epsilon, total.epsilon),
              _ratio_cap(per_token.delta, total.delta))
    return 0 if cap == math.inf else int(cap)


def advanced_epsilon(eps0: float, steps: int, delta_prime: float) -> float:
    """Advanced-composition epsilon for `steps` releases at eps0 with slack
    delta_prime: sqrt(2 T ln(1/delta')) eps0 + T eps0 (e^eps0 - 1)."""
    try:
        growth = math.exp(eps0) - 1.0
    except OverflowError:
        return math.inf
    return (
        math.sqrt(2.0 * steps * math.log(1.0 / delta_prime)) * eps0
        + steps * eps0 * growth
    )


def advanced_max(per_token: PrivacyBudget, total: PrivacyBudget) -> int:
    """Steps affordable under advanced composition with an even delta split.

    delta' = delta_total / 2 is spent on the composition slack and the
    remaining half covers the per-step deltas (T delta0 <= delta_total / 2).
    Found by linear scan from T = 1; both constraints are monotone in T.
    """
    if total.delta <= 0:
        return 0
    delta_prime = total.delta / 2.0
    per_step_delta_cap = total.delta / 2.0
    best = 0
    for steps in range(1, _SCAN_CAP + 1):
        if steps * per_token.delta > per_step_delta_cap:
            break
        if advanced_epsilon(per_token.epsilon, steps, delta_prime) > total.epsilon:
            break
        best = steps
    return best


def max_compositions(per_token: PrivacyBudget, total: PrivacyBudget) -> CompositionPlan:
    """The better of the two composition rules; ties go to sequential."""
    seq = sequential_max(per_token, total)
    adv = advanced_max(per_token, total)
    if seq == 0 and adv == 0:
        raise InfeasibleBudgetError(
            f"no release of ({per_token.epsilon}, {per_token.delta}) fits inside "
            f"({total.epsilon}, {total.delta}) under either composition rule"
        )
    if seq >= adv:
        return CompositionPlan(per_token, total, seq, CompositionRule.SEQUENTIAL)
    return CompositionPlan(per_token, total, adv, CompositionRule.ADVANCED)


class EventKind(Enum):
    PRIVATE_VOTE = "private_vote"
    SPARSE_PASS = "sparse_pass"


@dataclass(frozen=True)
class LedgerEvent:
    step_index: int
    kind: EventKind


@dataclass
class PrivacyLedger:
    """Run-time counter of private releases against a composition plan.

    Owned by exactly one generation loop at a time; invariant: number of
    PRIVATE_VOTE events plus `remaining` equals the plan's max_steps.
    """

    plan: CompositionPlan
    remaining: int = -1
    events: list[LedgerEvent] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.remaining < 0:
            self.remaining = self.plan.max_steps

    @classmethod
    def from_plan(cls, plan: CompositionPlan) -> "PrivacyLedger":
        return cls(plan=plan)

    def consume(self, step_index: int) -> "PrivacyLedger":
        """Record one private release; errors once the budget is exhausted."""
        if self.remaining <= 0:
            raise BudgetExhaustedError(
                f"all {self.plan.max_steps} private releases already spent"
            )
        self.remaining -= 1
        self.events.append(LedgerEvent(step_index, EventKind.PRIVATE_VOTE))
        return self

    def record_sparse_pass(self, step_index: int) -> "PrivacyLedger":
        """Record a budget-free pass-through token."""
        self.events.append(LedgerEvent(step_index, EventKind.SPARSE_PASS))
        return self

    def private_votes(self) -> int:
        return sum(1 for e in self.events if e.kind is EventKind.PRIVATE_VOTE)
