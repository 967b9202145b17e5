"""Generation loops: plain decoding, token voting, and the two private variants.

Each run produces the answer plus a full trace: per-step voter tokens, the
histogram, the gate verdict, noise-bearing mechanism outcomes, and the budget
remaining. Within a step the gate noise is always drawn before any selection
noise, and all randomness comes from streams derived from the caller's seeded
source, so a (config, seed, corpus, generator) tuple replays byte-for-byte.
"""

from __future__ import annotations

import hashlib
import json
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .accountant import PrivacyLedger, max_compositions
from .errors import InvalidArgumentError
from .generation import GenerationContext, Token, Vocabulary
from .mechanisms import (
    LimitedDomainConfig,
    PrivacyBudget,
    TokenHistogram,
    Verdict,
    above_threshold_init,
    above_threshold_query,
    limited_domain_top1,
)
from .retrieval import Corpus, TfidfIndex, index_corpus, partition, retrieve


class Algorithm(Enum):
    NON_RAG = "non-rag"
    VOTE_RAG = "vote-rag"
    DP_VOTE_RAG = "dp-vote-rag"
    DP_SPARSE_VOTE_RAG = "dp-sparse-vote-rag"


class HaltReason(Enum):
    EOS = "eos"
    NULL_TOKEN = "null_token"
    BUDGET_EXHAUSTED = "budget_exhausted"
    CAP_REACHED = "cap_reached"


@dataclass(frozen=True)
class RunConfig:
    """Hyperparameters of one generation run.

    tau defaults to m/2 and the restricted-domain candidate size equals m.
    t_max_cap bounds the output length independently of privacy.
    """

    algorithm: Algorithm
    m: int = 1
    k: int = 1
    per_token: PrivacyBudget | None = None
    total: PrivacyBudget | None = None
    tau: float | None = None
    t_max_cap: int = 64
    seed: int = 0
    jobs: int = 1

    def __post_init__(self) -> None:
        if self.m < 1 or self.k < 1:
            raise InvalidArgumentError("m and k must be positive")
        if self.t_max_cap < 1:
            raise InvalidArgumentError("t_max_cap must be positive")
        if self.jobs < 1:
            raise InvalidArgumentError("jobs must be positive")

    @property
    def effective_tau(self) -> float:
        return self.m / 2.0 if self.tau is None else self.tau

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "m": self.m,
            "k": self.k,
            "epsilon_token": None if self.per_token is None else self.per_token.epsilon,
            "delta_token": None if self.per_token is None else self.per_token.delta,
            "epsilon_total": None if self.total is None else self.total.epsilon,
            "delta_total": None if self.total is None else self.total.delta,
            "tau": self.effective_tau if self.algorithm is not Algorithm.NON_RAG else None,
            "t_max_cap": self.t_max_cap,
        }

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class StepRecord:
    index: int
    emitted_token: int | None
    voter_tokens: tuple[int, ...] | None = None
    non_rag_token: int | None = None
    histogram: dict[int, int] | None = None
    verdict: str | None = None
    budget_remaining_after: int | None = None
    vocab_extensions: tuple[str, ...] = ()


@dataclass
class GenerationTrace:
    algorithm: Algorithm
    question: str
    seed: int
    steps: list[StepRecord] = field(default_factory=list)
    final_answer: tuple[int, ...] = ()
    answer_text: str = ""
    halt_reason: HaltReason = HaltReason.CAP_REACHED

    def private_votes(self) -> int:
        return sum(1 for s in self.steps if s.verdict == "private_vote")

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm.value,
            "question": self.question,
            "seed": self.seed,
            "steps": [
                {
                    "index": s.index,
                    "emitted_token": s.emitted_token,
                    "voter_tokens": None if s.voter_tokens is None else list(s.voter_tokens),
                    "non_rag_token": s.non_rag_token,
                    "histogram": None
                    if s.histogram is None
                    else {str(k): v for k, v in sorted(s.histogram.items())},
                    "verdict": s.verdict,
                    "budget_remaining_after": s.budget_remaining_after,
                    "vocab_extensions": list(s.vocab_extensions),
                }
                for s in self.steps
            ],
            "final_answer": list(self.final_answer),
            "answer_text": self.answer_text,
            "halt_reason": self.halt_reason.value,
        }


def write_trace(trace: GenerationTrace, cfg: RunConfig, output_dir) -> Path:
    """Serialize one run to output_dir/trace-<confighash>-<seed>.json."""
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"trace-{cfg.config_hash()}-{trace.seed}.json"
    payload = {"config": cfg.to_dict(), **trace.to_dict()}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def _answer_text(vocab: Vocabulary, token_ids: tuple[int, ...]) -> str:
    return " ".join(vocab.token(tid).surface for tid in token_ids)


def _drain_extensions(vocab: Vocabulary, mark: int) -> tuple[str, ...]:
    return tuple(vocab.journal[mark:])


def _voter_tokens(generator, question: str, shards, prefix, jobs: int) -> list[Token]:
    contexts = [
        GenerationContext(question=question, documents=docs, prefix=prefix)
        for docs in shards
    ]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(generator.next_token, contexts))
    return [generator.next_token(ctx) for ctx in contexts]


def _plurality(hist: TokenHistogram) -> int:
    """Most frequent token id, ties broken by ascending token id."""
    return min(hist.counts.items(), key=lambda kv: (-kv[1], kv[0]))[0]


def _prepare_shards(
    question: str,
    corpus: Corpus,
    m: int,
    k: int,
    rng: random.Random,
    index: TfidfIndex | None,
):
    idx = index if index is not None else index_corpus(corpus)
    result = retrieve(idx, question, m * k)
    part = partition(result, m, k, rng)
    return [
        tuple(corpus.get(doc_id) for doc_id in subset) for subset in part.subsets
    ]


def run_non_rag(
    question: str,
    generator,
    cap: int,
    seed: int = 0,
) -> tuple[str, GenerationTrace]:
    """Greedy decoding with no documents until EOS or the cap."""
    vocab: Vocabulary = generator.vocab
    trace = GenerationTrace(Algorithm.NON_RAG, question, seed)
    prefix: tuple[Token, ...] = ()
    halt = HaltReason.CAP_REACHED
    for t in range(1, cap + 1):
        mark = len(vocab.journal)
        token = generator.next_token(GenerationContext(question=question, prefix=prefix))
        is_eos = token.id == vocab.eos.id
        trace.steps.append(
            StepRecord(
                index=t,
                emitted_token=token.id,
                vocab_extensions=_drain_extensions(vocab, mark),
            )
        )
        if is_eos:
            halt = HaltReason.EOS
            break
        prefix = prefix + (token,)
    trace.final_answer = tuple(tok.id for tok in prefix)
    trace.answer_text = _answer_text(vocab, trace.final_answer)
    trace.halt_reason = halt
    return trace.answer_text, trace


def run_vote_rag(
    question: str,
    corpus: Corpus,
    generator,
    m: int,
    k: int,
    rng: random.Random,
    cap: int,
    seed: int = 0,
    jobs: int = 1,
    index: TfidfIndex | None = None,
) -> tuple[str, GenerationTrace]:
    """Non-private plurality voting over m document shards."""
    part_rng = random.Random(rng.getrandbits(64))
    shards = _prepare_shards(question, corpus, m, k, part_rng, index)
    vocab: Vocabulary = generator.vocab
    trace = GenerationTrace(Algorithm.VOTE_RAG, question, seed)
    prefix: tuple[Token, ...] = ()
    halt = HaltReason.CAP_REACHED
    for t in range(1, cap + 1):
        mark = len(vocab.journal)
        votes = _voter_tokens(generator, question, shards, prefix, jobs)
        hist = TokenHistogram.from_tokens([tok.id for tok in votes])
        winner = vocab.token(_plurality(hist))
        trace.steps.append(
            StepRecord(
                index=t,
                emitted_token=winner.id,
                voter_tokens=tuple(tok.id for tok in votes),
                histogram=dict(hist.counts),
                vocab_extensions=_drain_extensions(vocab, mark),
            )
        )
        if winner.id == vocab.eos.id:
            halt = HaltReason.EOS
            break
        prefix = prefix + (winner,)
    trace.final_answer = tuple(tok.id for tok in prefix)
    trace.answer_text = _answer_text(vocab, trace.final_answer)
    trace.halt_reason = halt
    return trace.answer_text, trace


def run_dp_vote_rag(
    question: str,
    corpus: Corpus,
    generator,
    cfg: RunConfig,
    rng: random.Random,
    index: TfidfIndex | None = None,
) -> tuple[str, GenerationTrace]:
    """Private voting: every emitted token passes the restricted-domain
    selector, and the token count is capped by the composition plan."""
    if cfg.per_token is None or cfg.total is None:
        raise InvalidArgumentError("private runs need per-token and total budgets")
    plan = max_compositions(cfg.per_token, cfg.total)
    ledger = PrivacyLedger.from_plan(plan)
    part_rng = random.Random(rng.getrandbits(64))
    _svt_rng = random.Random(rng.getrandbits(64))  # unused; keeps stream layout
    vote_rng = random.Random(rng.getrandbits(64))
    shards = _prepare_shards(question, corpus, cfg.m, cfg.k, part_rng, index)
    vocab: Vocabulary = generator.vocab
    trace = GenerationTrace(Algorithm.DP_VOTE_RAG, question, cfg.seed)
    prefix: tuple[Token, ...] = ()
    halt = HaltReason.BUDGET_EXHAUSTED
    for t in range(1, plan.max_steps + 1):
        mark = len(vocab.journal)
        votes = _voter_tokens(generator, question, shards, prefix, cfg.jobs)
        hist = TokenHistogram.from_tokens([tok.id for tok in votes])
        ld_cfg = LimitedDomainConfig(
            k_bar=cfg.m, budget=cfg.per_token, vocab_size=len(vocab)
        )
        choice = limited_domain_top1(hist, ld_cfg, vote_rng)
        ledger.consume(t)
        trace.steps.append(
            StepRecord(
                index=t,
                emitted_token=None if choice is None else choice,
                voter_tokens=tuple(tok.id for tok in votes),
                histogram=dict(hist.counts),
                verdict="private_vote",
                budget_remaining_after=ledger.remaining,
                vocab_extensions=_drain_extensions(vocab, mark),
            )
        )
        if choice is None:
            halt = HaltReason.NULL_TOKEN
            break
        if choice == vocab.eos.id:
            halt = HaltReason.EOS
            break
        prefix = prefix + (vocab.token(choice),)
    trace.final_answer = tuple(tok.id for tok in prefix)
    trace.answer_text = _answer_text(vocab, trace.final_answer)
    trace.halt_reason = halt
    return trace.answer_text, trace


def run_dp_sparse_vote_rag(
    question: str,
    corpus: Corpus,
    generator,
    cfg: RunConfig,
    rng: random.Random,
    index: TfidfIndex | None = None,
) -> tuple[str, GenerationTrace]:
    """Private voting gated by the noisy threshold.

    The per-token budget is split evenly: half funds the threshold gate and
    half (with the full per-token delta) funds each private selection. Tokens
    whose histogram count at the no-context prediction clears the noisy
    threshold are emitted free; only below-threshold steps spend budget.
    """
    if cfg.per_token is None or cfg.total is None:
        raise InvalidArgumentError("private runs need per-token and total budgets")
    vote_budget = PrivacyBudget(cfg.per_token.epsilon / 2.0, cfg.per_token.delta)
    epsilon_gate = cfg.per_token.epsilon / 2.0
    plan = max_compositions(cfg.per_token, cfg.total)
    ledger = PrivacyLedger.from_plan(plan)
    part_rng = random.Random(rng.getrandbits(64))
    svt_rng = random.Random(rng.getrandbits(64))
    vote_rng = random.Random(rng.getrandbits(64))
    shards = _prepare_shards(question, corpus, cfg.m, cfg.k, part_rng, index)
    vocab: Vocabulary = generator.vocab
    gate = above_threshold_init(cfg.effective_tau, epsilon_gate, svt_rng)
    trace = GenerationTrace(Algorithm.DP_SPARSE_VOTE_RAG, question, cfg.seed)
    prefix: tuple[Token, ...] = ()
    halt = HaltReason.CAP_REACHED
    for t in range(1, cfg.t_max_cap + 1):
        mark = len(vocab.journal)
        non_rag = generator.next_token(
            GenerationContext(question=question, prefix=prefix)
        )
        votes = _voter_tokens(generator, question, shards, prefix, cfg.jobs)
        hist = TokenHistogram.from_tokens([tok.id for tok in votes])
        agreement = hist.count_at(non_rag.id)
        verdict = above_threshold_query(agreement, gate, svt_rng)
        if verdict is Verdict.ABOVE:
            emitted: int | None = non_rag.id
            ledger.record_sparse_pass(t)
            verdict_name = "sparse_pass"
        else:
            ld_cfg = LimitedDomainConfig(
                k_bar=cfg.m, budget=vote_budget, vocab_size=len(vocab)
            )
            emitted = limited_domain_top1(hist, ld_cfg, vote_rng)
            ledger.consume(t)
            # The listing refreshes the threshold even when the budget just
            # hit zero and the refreshed value is never used.
            gate = above_threshold_init(cfg.effective_tau, epsilon_gate, svt_rng)
            verdict_name = "private_vote"
        trace.steps.append(
            StepRecord(
                index=t,
                emitted_token=emitted,
                voter_tokens=tuple(tok.id for tok in votes),
                non_rag_token=non_rag.id,
                histogram=dict(hist.counts),
                verdict=verdict_name,
                budget_remaining_after=ledger.remaining,
                vocab_extensions=_drain_extensions(vocab, mark),
            )
        )
        if emitted is None:
            halt = HaltReason.NULL_TOKEN
            break
        if emitted == vocab.eos.id:
            halt = HaltReason.EOS
            break
        prefix = prefix + (vocab.token(emitted),)
        if ledger.remaining == 0:
            halt = HaltReason.BUDGET_EXHAUSTED
            break
    trace.final_answer = tuple(tok.id for tok in prefix)
    trace.answer_text = _answer_text(vocab, trace.final_answer)
    trace.halt_reason = halt
    return trace.answer_text, trace


def run_algorithm(
    question: str,
    corpus: Corpus | None,
    generator,
    cfg: RunConfig,
    rng: random.Random,
    index: TfidfIndex | None = None,
) -> tuple[str, GenerationTrace]:
    """Dispatch one run according to cfg.algorithm."""
    if cfg.algorithm is Algorithm.NON_RAG:
        return run_non_rag(question, generator, cfg.t_max_cap, seed=cfg.seed)
    if corpus is None:
        raise InvalidArgumentError(f"{cfg.algorithm.value} requires a corpus")
    if cfg.algorithm is Algorithm.VOTE_RAG:
        return run_vote_rag(
            question, corpus, generator, cfg.m, cfg.k, rng, cfg.t_max_cap,
            seed=cfg.seed, jobs=cfg.jobs, index=index,
        )
    if cfg.algorithm is Algorithm.DP_VOTE_RAG:
        return run_dp_vote_rag(question, corpus, generator, cfg, rng, index=index)
    if cfg.algorithm is Algorithm.DP_SPARSE_VOTE_RAG:
        return run_dp_sparse_vote_rag(question, corpus, generator, cfg, rng, index=index)
    raise InvalidArgumentError(f"unknown algorithm {cfg.algorithm!r}")
