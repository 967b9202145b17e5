"""Utility and empirical-privacy evaluation.

Match accuracy for QA, the regurgitation-based membership-inference attack
(BLEU-precision of the system's answer to a document's query half against
its ground-truth half), ROC/AUC computation, and the seeded sweep runner.
"""

from __future__ import annotations

import csv
import json
import statistics
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

from .engine import Algorithm, RunConfig, run_algorithm, write_trace
from .errors import DataError, EvaluationError, InvalidArgumentError
from .mechanisms import PrivacyBudget
from .retrieval import Corpus, Document, TfidfIndex, index_corpus
from .seeding import derive_rng, derive_seed
from .textutil import normalize_answer, word_tokens

MIA_DELIMITER = "###"


@dataclass(frozen=True)
class QaExample:
    question: str
    answers: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.answers:
            raise InvalidArgumentError("a QA example needs at least one answer")


class Membership(Enum):
    IN = "in"
    OUT = "out"


@dataclass(frozen=True)
class MiaExample:
    """One attack target: the document, its query half, and its answer half."""

    doc: Document
    query_part: str
    ground_truth_answer: str
    membership: Membership


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float], ...]
    auc: float


def match_accuracy(prediction: str, answers: Sequence[str]) -> int:
    """1 iff the normalized prediction contains any normalized answer."""
    if not answers:
        raise InvalidArgumentError("answers must be non-empty")
    haystack = normalize_answer(prediction)
    if not haystack:
        return 0
    for answer in answers:
        needle = normalize_answer(answer)
        if needle and needle in haystack:
            return 1
    return 0


def bleu_precision(candidate: str, reference: str) -> float:
    """Mean modified n-gram precision for n = 1..4.

    Orders are capped at the candidate length; an order with zero matches is
    add-one smoothed ((matches + 1) / (total + 1)). Empty candidates score 0.
    """
    cand = word_tokens(candidate)
    ref = word_tokens(reference)
    max_order = min(4, len(cand))
    if max_order == 0:
        return 0.0
    precisions = []
    for n in range(1, max_order + 1):
        cand_grams: dict[tuple[str, ...], int] = {}
        for i in range(len(cand) - n + 1):
            gram = tuple(cand[i : i + n])
            cand_grams[gram] = cand_grams.get(gram, 0) + 1
        ref_grams: dict[tuple[str, ...], int] = {}
        for i in range(len(ref) - n + 1):
            gram = tuple(ref[i : i + n])
            ref_grams[gram] = ref_grams.get(gram, 0) + 1
        total = sum(cand_grams.values())
        matches = sum(
            min(count, ref_grams.get(gram, 0)) for gram, count in cand_grams.items()
        )
        if matches == 0:
            precisions.append(1.0 / (total + 1.0))
        else:
            precisions.append(matches / total)
    return sum(precisions) / len(precisions)


def split_mia_document(doc: Document, membership: Membership) -> MiaExample:
    """Split a document into query and ground-truth halves at the delimiter."""
    if MIA_DELIMITER not in doc.text:
        raise DataError(f"document {doc.doc_id!r} has no {MIA_DELIMITER!r} delimiter")
    query, _, answer = doc.text.partition(MIA_DELIMITER)
    return MiaExample(
        doc=doc,
        query_part=query.strip(),
        ground_truth_answer=answer.strip(),
        membership=membership,
    )


def s2mia_score(example: MiaExample, system: Callable[[str], str]) -> float:
    """Membership score: BLEU precision of the system's answer to the target's
    query half against the target's ground-truth half. Higher means more
    likely a member."""
    try:
        answer = system(example.query_part)
    except Exception as exc:
        raise EvaluationError(
            f"system failed on attack example {example.doc.doc_id!r}: {exc}"
        ) from exc
    return bleu_precision(answer, example.ground_truth_answer)


def roc_auc(in_scores: Sequence[float], out_scores: Sequence[float]) -> RocCurve:
    """ROC curve and trapezoidal AUC from member and non-member scores.

    Thresholds sweep the union of observed scores in descending order; equal
    scores are processed as a single threshold.
    """
    if not in_scores or not out_scores:
        raise InvalidArgumentError("both score lists must be non-empty")
    points = [(0.0, 0.0)]
    for threshold in sorted(set(in_scores) | set(out_scores), reverse=True):
        tpr = sum(1 for s in in_scores if s >= threshold) / len(in_scores)
        fpr = sum(1 for s in out_scores if s >= threshold) / len(out_scores)
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    auc = 0.0
    for (x0, y0), (x1, y1) in zip(points, points[1:]):
        auc += (x1 - x0) * (y0 + y1) / 2.0
    return RocCurve(points=tuple(points), auc=auc)


def load_questions_jsonl(path) -> list[QaExample]:
    """Load QA examples from JSONL with fields question, answers."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                examples.append(
                    QaExample(
                        question=str(record["question"]),
                        answers=tuple(str(a) for a in record["answers"]),
                    )
                )
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise DataError(f"{path}:{lineno}: bad question record: {exc}") from exc
    if not examples:
        raise DataError(f"{path}: question set is empty")
    return examples


def load_mia_jsonl(path, membership: Membership) -> list[MiaExample]:
    """Load attack targets from JSONL with fields doc_id, text, membership."""
    examples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                doc = Document(
                    doc_id=str(record["doc_id"]),
                    text=str(record["text"]),
                    owner_id=str(record.get("owner_id", record["doc_id"])),
                )
                declared = Membership(str(record.get("membership", membership.value)))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise DataError(f"{path}:{lineno}: bad attack record: {exc}") from exc
            examples.append(split_mia_document(doc, declared))
    if not examples:
        raise DataError(f"{path}: attack set is empty")
    return examples


RESULT_FIELDS = [
    "algorithm",
    "epsilon_total",
    "epsilon_token",
    "m",
    "k",
    "tau",
    "accuracy_mean",
    "accuracy_std",
    "mean_tokens",
    "mean_private_votes",
    "error_count",
]


@dataclass
class ExperimentConfig:
    """One sweep: the cartesian grid of algorithms, budgets, and voter counts.

    Every (question, repetition) pair gets its own derived seed, shared
    across grid cells so cell comparisons are paired.
    """

    questions: list[QaExample]
    corpus: Corpus | None
    generator_factory: Callable[[], object]
    algorithms: list[Algorithm]
    epsilon_totals: list[float] = field(default_factory=lambda: [10.0])
    epsilon_tokens: list[float] = field(default_factory=lambda: [1.0])
    ms: list[int] = field(default_factory=lambda: [1])
    k: int = 1
    delta_token: float = 1e-5
    delta_total: float = 1e-4
    tau: float | None = None
    t_max_cap: int = 64
    repetitions: int = 3
    base_seed: int = 0
    output_dir: Path = Path("results")
    write_traces: bool = True
    jobs: int = 1


def _format_value(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def _cell_config(
    exp: ExperimentConfig,
    algorithm: Algorithm,
    eps_total: float,
    eps_token: float,
    m: int,
    seed: int,
) -> RunConfig:
    private = algorithm in (Algorithm.DP_VOTE_RAG, Algorithm.DP_SPARSE_VOTE_RAG)
    return RunConfig(
        algorithm=algorithm,
        m=m,
        k=exp.k,
        per_token=PrivacyBudget(eps_token, exp.delta_token) if private else None,
        total=PrivacyBudget(eps_total, exp.delta_total) if private else None,
        tau=exp.tau,
        t_max_cap=exp.t_max_cap,
        seed=seed,
        jobs=exp.jobs,
    )


def run_experiment(exp: ExperimentConfig) -> Path:
    """Run the sweep and write one CSV row per grid cell.

    Per-question failures increment the cell's error_count and are excluded
    from the aggregates; they never abort the sweep. Identical config and
    base seed reproduce the CSV byte for byte.
    """
    out_dir = Path(exp.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    index: TfidfIndex | None = (
        index_corpus(exp.corpus) if exp.corpus is not None else None
    )
    rows = []
    for algorithm in exp.algorithms:
        for eps_total in exp.epsilon_totals:
            for eps_token in exp.epsilon_tokens:
                for m in exp.ms:
                    row = _run_cell(exp, algorithm, eps_total, eps_token, m, index)
                    rows.append(row)
    csv_path = out_dir / "results.csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RESULT_FIELDS)
        for row in rows:
            writer.writerow([_format_value(row[field]) for field in RESULT_FIELDS])
    return csv_path


def _run_cell(
    exp: ExperimentConfig,
    algorithm: Algorithm,
    eps_total: float,
    eps_token: float,
    m: int,
    index: TfidfIndex | None,
) -> dict:
    per_rep_accuracy: list[float] = []
    token_counts: list[int] = []
    private_votes: list[int] = []
    errors = 0
    tau_used: float | None = None
    for rep in range(exp.repetitions):
        rep_hits: list[int] = []
        for q_idx, example in enumerate(exp.questions):
            seed = derive_seed(exp.base_seed, "question", q_idx, "rep", rep)
            cfg = _cell_config(exp, algorithm, eps_total, eps_token, m, seed)
            if algorithm is not Algorithm.NON_RAG:
                tau_used = cfg.effective_tau
            generator = exp.generator_factory()
            rng = derive_rng(seed, "run")
            try:
                answer, trace = run_algorithm(
                    example.question, exp.corpus, generator, cfg, rng, index=index
                )
            except Exception:
                errors += 1
                continue
            rep_hits.append(match_accuracy(answer, example.answers))
            token_counts.append(len(trace.final_answer))
            private_votes.append(trace.private_votes())
            if exp.write_traces:
                write_trace(trace, cfg, Path(exp.output_dir) / "traces")
        if rep_hits:
            per_rep_accuracy.append(sum(rep_hits) / len(rep_hits))
    return {
        "algorithm": algorithm.value,
        "epsilon_total": eps_total,
        "epsilon_token": eps_token,
        "m": m,
        "k": exp.k,
        "tau": tau_used,
        "accuracy_mean": statistics.mean(per_rep_accuracy) if per_rep_accuracy else None,
        "accuracy_std": (
            statistics.pstdev(per_rep_accuracy) if per_rep_accuracy else None
        ),
        "mean_tokens": statistics.mean(token_counts) if token_counts else None,
        "mean_private_votes": (
            statistics.mean(private_votes) if private_votes else None
        ),
        "error_count": errors,
    }


def attack_system(
    in_examples: Sequence[MiaExample],
    out_examples: Sequence[MiaExample],
    system: Callable[[str], str],
) -> RocCurve:
    """Score both target sets with the attack and return the ROC curve."""
    in_scores = [s2mia_score(ex, system) for ex in in_examples]
    out_scores = [s2mia_score(ex, system) for ex in out_examples]
    return roc_auc(in_scores, out_scores)


def system_from_config(
    corpus: Corpus | None,
    generator_factory: Callable[[], object],
    cfg_template: RunConfig,
    base_seed: int,
    index: TfidfIndex | None = None,
) -> Callable[[str], str]:
    """Build a question -> answer callable with per-question derived seeds."""

    def system(question: str) -> str:
        seed = derive_seed(base_seed, "mia", question)
        cfg = RunConfig(
            algorithm=cfg_template.algorithm,
            m=cfg_template.m,
            k=cfg_template.k,
            per_token=cfg_template.per_token,
            total=cfg_template.total,
            tau=cfg_template.tau,
            t_max_cap=cfg_template.t_max_cap,
            seed=seed,
            jobs=cfg_template.jobs,
        )
        rng = derive_rng(seed, "run")
        generator = generator_factory()
        answer, _ = run_algorithm(question, corpus, generator, cfg, rng, index=index)
        return answer

    return system
