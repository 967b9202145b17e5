"""Differential-privacy primitives.

Noise samplers (Laplace, Gumbel), the private top-1 selector over a token
histogram with a restricted candidate domain, and the noisy-threshold gate
used to decide when a private vote is necessary.

All operations are pure functions of (inputs, random source): identical
seeds give bit-identical outputs. Each sampler consumes exactly one uniform
draw from the supplied source.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass
from enum import Enum

from .errors import ContractViolationError, InvalidArgumentError

# The clamped uniform draw lies in [2^-53, 1 - 2^-53], so |log(-log(u))| is
# at most ~36.74 and the spread between two Gumbel draws at scale b is below
# 41*b. When 41*b < 1, noise can never reorder integer-valued scores.
_NOISE_SPAN = 41.0


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) privacy allowance.

    epsilon is the privacy loss in nats and must be positive; delta is the
    additive failure probability and must lie in [0, 1).
    """

    epsilon: float
    delta: float = 0.0

    def __post_init__(self) -> None:
        if not self.epsilon > 0:
            raise InvalidArgumentError(f"epsilon must be positive, got {self.epsilon}")
        if not 0.0 <= self.delta < 1.0:
            raise InvalidArgumentError(f"delta must be in [0, 1), got {self.delta}")


@dataclass(frozen=True)
class TokenHistogram:
    """Per-step vote counts over token ids.

    Sensitivity contract: changing one voter's token moves exactly two bins
    by +/-1 each, which is what the selector's noise scale is calibrated to.
    """

    counts: dict[int, int]
    voter_count: int

    def __post_init__(self) -> None:
        if any(c < 0 for c in self.counts.values()):
            raise InvalidArgumentError("histogram counts must be non-negative")
        if sum(self.counts.values()) != self.voter_count:
            raise InvalidArgumentError("histogram counts must sum to voter_count")

    @classmethod
    def from_tokens(cls, token_ids: list[int]) -> "TokenHistogram":
        counts: dict[int, int] = {}
        for tid in token_ids:
            counts[tid] = counts.get(tid, 0) + 1
        return cls(counts=counts, voter_count=len(token_ids))

    def count_at(self, token_id: int) -> int:
        return self.counts.get(token_id, 0)


@dataclass
class NoisyThresholdState:
    """State of one noisy-threshold gate instance.

    Single-use-until-refresh: once a query returns BELOW the state is
    consumed and must be re-initialized before the next query.
    """

    tau: float
    tau_hat: float
    epsilon_lap: float
    consumed: bool = False


@dataclass(frozen=True)
class LimitedDomainConfig:
    """Parameters of the restricted-domain private top-1 selector.

    k_bar is the candidate-set size. vocab_size is the full vocabulary size
    the histogram ranges over; it feeds the null-candidate cutoff. When
    None, the vocabulary is assumed large relative to k_bar.
    """

    k_bar: int
    budget: PrivacyBudget
    vocab_size: int | None = None

    def __post_init__(self) -> None:
        if self.k_bar < 1:
            raise InvalidArgumentError(f"k_bar must be >= 1, got {self.k_bar}")
        if self.budget.delta <= 0:
            raise InvalidArgumentError("restricted-domain selection requires delta > 0")
        if self.vocab_size is not None and self.vocab_size < 1:
            raise InvalidArgumentError("vocab_size must be >= 1 when given")


class Verdict(Enum):
    ABOVE = "above"
    BELOW = "below"


def _uniform_open(rng: random.Random) -> float:
    # random() yields [0, 1); push the measure-zero 0.0 into the open interval
    # so log transforms stay finite.
    u = rng.random()
    return u if u > 0.0 else 2.0**-53


def sample_laplace(scale: float, rng: random.Random) -> float:
    """One Laplace(0, scale) draw via inverse CDF from a single uniform.

    F^-1(u) = -scale * sgn(u - 1/2) * ln(1 - 2|u - 1/2|)
    """
    if not scale > 0:
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    u = _uniform_open(rng)
    centered = u - 0.5
    if centered == 0.0:
        return 0.0
    return -scale * math.copysign(1.0, centered) * math.log(1.0 - 2.0 * abs(centered))


def sample_gumbel(scale: float, rng: random.Random) -> float:
    """One Gumbel(0, scale) draw via the double-log transform -scale*ln(-ln u)."""
    if not scale > 0:
        raise InvalidArgumentError(f"scale must be positive, got {scale}")
    u = _uniform_open(rng)
    return -scale * math.log(-math.log(u))


def _null_cutoff(runner_up: int, cfg: LimitedDomainConfig) -> int:
    # Count assigned to the synthetic null candidate: one more than the
    # (k_bar+1)-th largest count plus a delta-calibrated safety margin over
    # the pruned part of the vocabulary.
    eps, delta = cfg.budget.epsilon, cfg.budget.delta
    domain = cfg.vocab_size if cfg.vocab_size is not None else 2 * cfg.k_bar
    pruned = max(1, min(cfg.k_bar, domain - cfg.k_bar))
    return runner_up + 1 + math.ceil(math.log(pruned / delta) / eps)


def limited_domain_top1(
    hist: TokenHistogram, cfg: LimitedDomainConfig, rng: random.Random
) -> int | None:
    """Privately select the most frequent token, or None when no candidate
    safely dominates.

    The domain is restricted to the k_bar largest counts (ties broken by
    ascending token id). A synthetic null candidate is scored with a
    data-dependent cutoff count; independent Gumbel(2/epsilon) noise is added
    to every candidate and to the cutoff, and the arg-max is returned. A None
    result signals "no safe winner" and callers treat it as end of sequence.

    Noise is drawn in ascending token-id order, null candidate last. In the
    effectively-noiseless regime (noise spread below the integer count
    resolution) the selection short-circuits to the deterministic arg-max by
    (count, token id), which is also the exact large-epsilon limit of the
    noisy path up to tie-breaking.
    """
    if hist.voter_count < 1 or not hist.counts:
        raise InvalidArgumentError("histogram must contain at least one vote")
    ranked = sorted(
        ((t, c) for t, c in hist.counts.items() if c > 0),
        key=lambda kv: (-kv[1], kv[0]),
    )
    candidates = ranked[: cfg.k_bar]
    runner_up = ranked[cfg.k_bar][1] if len(ranked) > cfg.k_bar else 0
    cutoff = _null_cutoff(runner_up, cfg)
    scale = 2.0 / cfg.budget.epsilon

    if scale * _NOISE_SPAN < 1.0:
        top_id, top_count = candidates[0]
        return None if cutoff > top_count else top_id

    best_id: int | None = None
    best_score = -math.inf
    for token_id, count in sorted(candidates):
        score = count + sample_gumbel(scale, rng)
        if score > best_score:
            best_id, best_score = token_id, score
    null_score = cutoff + sample_gumbel(scale, rng)
    if null_score > best_score:
        return None
    return best_id


def above_threshold_init(
    tau: float, epsilon_lap: float, rng: random.Random
) -> NoisyThresholdState:
    """Create a fresh gate state with tau_hat = tau + Laplace(2/epsilon_lap)."""
    if not epsilon_lap > 0:
        raise InvalidArgumentError(f"epsilon_lap must be positive, got {epsilon_lap}")
    tau_hat = tau + sample_laplace(2.0 / epsilon_lap, rng)
    return NoisyThresholdState(tau=tau, tau_hat=tau_hat, epsilon_lap=epsilon_lap)


def above_threshold_query(
    count: int, state: NoisyThresholdState, rng: random.Random
) -> Verdict:
    """Compare a noisy count against the noisy threshold.

    Returns BELOW iff count + Laplace(4/epsilon_lap) <= tau_hat, consuming the
    state; the caller must re-initialize before querying again. ABOVE leaves
    the state reusable and costs no budget.
    """
    if count < 0:
        raise InvalidArgumentError(f"count must be non-negative, got {count}")
    if state.consumed:
        raise ContractViolationError(
            "noisy threshold state already consumed by a BELOW verdict; re-initialize"
        )
    noise = sample_laplace(4.0 / state.epsilon_lap, rng)
    if count + noise <= state.tau_hat:
        state.consumed = True
        return Verdict.BELOW
    return Verdict.ABOVE
