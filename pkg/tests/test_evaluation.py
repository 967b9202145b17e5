"""Tests for the utility metric, the attack score, ROC/AUC, and the sweep runner."""

from __future__ import annotations

import csv
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dpvote.engine import Algorithm
from dpvote.errors import EvaluationError, InvalidArgumentError
from dpvote.evaluation import (
    ExperimentConfig,
    Membership,
    QaExample,
    bleu_precision,
    load_mia_jsonl,
    load_questions_jsonl,
    match_accuracy,
    roc_auc,
    run_experiment,
    s2mia_score,
    split_mia_document,
)
from dpvote.generation import EOS_SURFACE
from dpvote.retrieval import Document

from conftest import make_corpus, script_voting_scenario


# --- match accuracy -------------------------------------------------------------


def test_match_accuracy_contains_answer():
    prediction = "The Great Gatsby is a novel written by F. Scott Fitzgerald."
    assert match_accuracy(prediction, ["novel"]) == 1


def test_match_accuracy_truncated_answer_misses():
    assert match_accuracy("The Great Gatsby is a", ["novel"]) == 0


def test_match_accuracy_empty_prediction():
    assert match_accuracy("", ["anything"]) == 0


def test_match_accuracy_any_of_multiple_answers():
    assert match_accuracy("population is ten million", ["10 million", "ten million"]) == 1


def test_match_accuracy_requires_answers():
    with pytest.raises(InvalidArgumentError):
        match_accuracy("text", [])


@settings(max_examples=80, deadline=None)
@given(st.text(alphabet="abcdef .,!?", min_size=1, max_size=20))
def test_match_accuracy_case_and_punctuation_invariant(answer):
    prediction = f"Prefix words... {answer.upper()} -- suffix!"
    expected = match_accuracy(prediction, [answer])
    assert match_accuracy(prediction.lower(), [answer.title()]) == expected


# --- BLEU precision ----------------------------------------------------------------


def test_bleu_identity_is_one():
    text = "you should take two tablets every morning"
    assert bleu_precision(text, text) == 1.0


def test_bleu_disjoint_twenty_token_strings():
    candidate = " ".join(f"c{i}" for i in range(20))
    reference = " ".join(f"r{i}" for i in range(20))
    # Hand-evaluated smoothed value: mean(1/21, 1/20, 1/19, 1/18).
    expected = (1 / 21 + 1 / 20 + 1 / 19 + 1 / 18) / 4
    assert bleu_precision(candidate, reference) == pytest.approx(expected)
    assert bleu_precision(candidate, reference) == pytest.approx(0.05145154553, abs=1e-9)


def test_bleu_two_token_example():
    # Unigram 1/2; bigram has zero matches so it smooths to (0+1)/(1+1).
    assert bleu_precision("a b", "a c") == pytest.approx((0.5 + 0.5) / 2)


def test_bleu_empty_candidate_is_zero():
    assert bleu_precision("", "reference text") == 0.0


def test_bleu_orders_cap_at_candidate_length():
    # Single-token candidate: only the unigram order counts.
    assert bleu_precision("a", "a a a") == 1.0


def test_bleu_is_asymmetric():
    assert bleu_precision("a", "a a") != bleu_precision("a a", "a")


def test_bleu_clips_repeated_candidate_tokens():
    # "a a a" vs "a": only one unigram match survives clipping.
    assert bleu_precision("a a a", "a") == pytest.approx(((1 / 3) + 1 / 3 + 1 / 2) / 3)


# --- attack score ---------------------------------------------------------------------


def _example(doc_id, query, answer, membership=Membership.IN):
    doc = Document(doc_id, f"{query} ### {answer}", doc_id)
    return split_mia_document(doc, membership)


def test_split_uses_delimiter():
    ex = _example("p1", "patient asks things", "doctor answers words")
    assert ex.query_part == "patient asks things"
    assert ex.ground_truth_answer == "doctor answers words"


def test_split_requires_delimiter():
    from dpvote.errors import DataError

    with pytest.raises(DataError):
        split_mia_document(Document("p", "no delimiter here", "p"), Membership.IN)


def test_regurgitating_system_scores_one():
    ex = _example("p1", "query half", "the exact answer text")
    assert s2mia_score(ex, lambda q: "the exact answer text") == 1.0


def test_uninformative_system_yields_half_auc():
    examples_in = [_example(f"i{k}", f"q {k}", f"answer {k}") for k in range(5)]
    examples_out = [
        _example(f"o{k}", f"q {k}", f"answer {k}", Membership.OUT) for k in range(5)
    ]
    silent = lambda q: ""
    in_scores = [s2mia_score(ex, silent) for ex in examples_in]
    out_scores = [s2mia_score(ex, silent) for ex in examples_out]
    assert set(in_scores) == {0.0}
    assert roc_auc(in_scores, out_scores).auc == pytest.approx(0.5)


def test_asymmetric_system_separates_perfectly():
    members = [_example(f"i{k}", f"query {k}", f"secret answer {k}") for k in range(6)]
    outsiders = [
        _example(f"o{k}", f"query x{k}", f"hidden truth {k}", Membership.OUT)
        for k in range(6)
    ]
    truths = {ex.query_part: ex.ground_truth_answer for ex in members}
    system = lambda q: truths.get(q, "completely unrelated words entirely")
    in_scores = [s2mia_score(ex, system) for ex in members]
    out_scores = [s2mia_score(ex, system) for ex in outsiders]
    # Brute-force pair counting oracle.
    wins = sum(
        1.0 if a > b else 0.5 if a == b else 0.0 for a in in_scores for b in out_scores
    )
    assert wins / (len(in_scores) * len(out_scores)) == 1.0
    assert roc_auc(in_scores, out_scores).auc == 1.0


def test_attack_errors_carry_the_example_id():
    ex = _example("patient-42", "q", "a")

    def broken(question):
        raise RuntimeError("backend out to lunch")

    with pytest.raises(EvaluationError, match="patient-42"):
        s2mia_score(ex, broken)


# --- ROC / AUC ---------------------------------------------------------------------------


def test_perfect_separation():
    curve = roc_auc([0.9, 0.8], [0.1, 0.2])
    assert curve.auc == 1.0
    assert curve.points[0] == (0.0, 0.0)
    assert curve.points[-1] == (1.0, 1.0)


def test_identical_multisets_are_chance():
    assert roc_auc([0.3, 0.7], [0.3, 0.7]).auc == pytest.approx(0.5)


def test_interleaved_scores_match_pair_counting():
    in_scores, out_scores = [0.9, 0.1], [0.8, 0.2]
    wins = sum(
        1.0 if a > b else 0.5 if a == b else 0.0
        for a in in_scores
        for b in out_scores
    )
    assert wins / 4 == 0.5
    assert roc_auc(in_scores, out_scores).auc == pytest.approx(0.5)


def test_roc_rejects_empty_lists():
    with pytest.raises(InvalidArgumentError):
        roc_auc([], [0.1])
    with pytest.raises(InvalidArgumentError):
        roc_auc([0.1], [])


def test_curve_coordinates_are_monotone():
    rng = random.Random(3)
    curve = roc_auc(
        [rng.random() for _ in range(30)], [rng.random() for _ in range(30)]
    )
    for (x0, y0), (x1, y1) in zip(curve.points, curve.points[1:]):
        assert x1 >= x0 and y1 >= y0


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.integers(0, 10**6), min_size=1, max_size=12, unique=True),
    st.lists(st.integers(0, 10**6), min_size=1, max_size=12, unique=True),
)
def test_auc_complement_for_tie_free_scores(a, b):
    scale = 1.0 / (10**6 + 1)
    in_scores = [x * scale for x in a if x not in set(b)]
    out_scores = [x * scale for x in b]
    if not in_scores:
        return
    total = roc_auc(in_scores, out_scores).auc + roc_auc(out_scores, in_scores).auc
    assert total == pytest.approx(1.0)


# --- data loaders ----------------------------------------------------------------------


def test_question_loader(tmp_path):
    path = tmp_path / "questions.jsonl"
    path.write_text(
        '{"question": "Q1", "answers": ["a", "b"]}\n'
        '{"question": "Q2", "answers": ["c"]}\n',
        encoding="utf-8",
    )
    questions = load_questions_jsonl(path)
    assert [q.question for q in questions] == ["Q1", "Q2"]
    assert questions[0].answers == ("a", "b")


def test_question_loader_rejects_bad_rows(tmp_path):
    from dpvote.errors import DataError

    path = tmp_path / "bad.jsonl"
    path.write_text('{"question": "Q1"}\n', encoding="utf-8")
    with pytest.raises(DataError):
        load_questions_jsonl(path)


def test_mia_loader(tmp_path):
    path = tmp_path / "in.jsonl"
    path.write_text(
        '{"doc_id": "p1", "text": "ask ### answer", "membership": "in"}\n',
        encoding="utf-8",
    )
    examples = load_mia_jsonl(path, Membership.IN)
    assert examples[0].membership is Membership.IN
    assert examples[0].ground_truth_answer == "answer"


# --- sweep runner ------------------------------------------------------------------------


def _scripted_experiment(tmp_path, **overrides):
    docs = [f"background doc {i}" for i in range(3)]
    corpus = make_corpus(docs)
    question = "what is the codeword"

    def factory():
        return script_voting_scenario(question, docs, ["swordfish", EOS_SURFACE])

    defaults = dict(
        questions=[QaExample(question, ("swordfish",))],
        corpus=corpus,
        generator_factory=factory,
        algorithms=[Algorithm.VOTE_RAG],
        epsilon_totals=[10.0],
        epsilon_tokens=[1.0],
        ms=[3],
        repetitions=3,
        base_seed=11,
        output_dir=tmp_path / "results",
        write_traces=True,
    )
    defaults.update(overrides)
    return ExperimentConfig(**defaults)


def _read_rows(csv_path):
    with open(csv_path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def test_single_cell_experiment(tmp_path):
    csv_path = run_experiment(_scripted_experiment(tmp_path))
    rows = _read_rows(csv_path)
    assert len(rows) == 1
    assert rows[0]["algorithm"] == "vote-rag"
    assert float(rows[0]["accuracy_mean"]) in (0.0, 1.0)
    assert rows[0]["error_count"] == "0"
    traces = list((tmp_path / "results" / "traces").glob("trace-*.json"))
    assert len(traces) == 3  # one per repetition, distinct derived seeds


def test_deterministic_cell_has_zero_std(tmp_path):
    csv_path = run_experiment(_scripted_experiment(tmp_path))
    row = _read_rows(csv_path)[0]
    assert float(row["accuracy_mean"]) == 1.0
    assert float(row["accuracy_std"]) == 0.0


def test_grid_produces_four_rows_per_algorithm(tmp_path):
    exp = _scripted_experiment(
        tmp_path,
        algorithms=[Algorithm.VOTE_RAG, Algorithm.DP_VOTE_RAG],
        epsilon_totals=[5.0, 10.0],
        ms=[2, 3],
        epsilon_tokens=[1.0],
        repetitions=1,
    )
    rows = _read_rows(run_experiment(exp))
    assert len(rows) == 8
    for name in ("vote-rag", "dp-vote-rag"):
        assert sum(1 for r in rows if r["algorithm"] == name) == 4


def test_experiment_is_byte_deterministic(tmp_path):
    first = run_experiment(_scripted_experiment(tmp_path / "a")).read_bytes()
    second = run_experiment(_scripted_experiment(tmp_path / "b")).read_bytes()
    assert first == second


def test_failures_land_in_error_count(tmp_path):
    # m = 5 voters over a 3-document corpus cannot retrieve enough shards.
    exp = _scripted_experiment(tmp_path, ms=[5], repetitions=2)
    rows = _read_rows(run_experiment(exp))
    assert rows[0]["error_count"] == "2"
    assert rows[0]["accuracy_mean"] == ""
