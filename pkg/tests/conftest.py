"""Shared fixtures: deterministic random stubs, scenario builders, corpora."""

from __future__ import annotations

import random

import pytest

from dpvote.generation import (
    EOS_SURFACE,
    GenerationContext,
    PromptRendering,
    ScriptedGenerator,
    Vocabulary,
)
from dpvote.retrieval import Corpus, Document


class FakeRandom:
    """Uniform-draw stub; the samplers only ever call .random()."""

    def __init__(self, values):
        self._values = list(values)

    def random(self):
        return self._values.pop(0)


class FunctionGenerator:
    """Test generator that maps a context to a surface via a plain function."""

    def __init__(self, fn, vocab: Vocabulary | None = None):
        self.fn = fn
        self.vocab = vocab or Vocabulary()
        self.rendering = PromptRendering()

    def next_token(self, ctx: GenerationContext):
        return self.vocab.add(self.fn(ctx))


def make_corpus(texts, prefix="d"):
    return Corpus(
        [
            Document(doc_id=f"{prefix}{i:03d}", text=text, owner_id=f"owner{i:03d}")
            for i, text in enumerate(texts)
        ]
    )


def script_voting_scenario(
    question,
    doc_texts,
    emitted,
    non_rag=None,
    dissent=None,
    fallback=EOS_SURFACE,
):
    """Scripted generator for a voting run whose output follows `emitted`.

    Every single-document shard votes emitted[t] at each prefix emitted[:t];
    the no-document context follows `non_rag` (defaults to `emitted`).
    `dissent` maps doc_text -> {step: surface} to override single voters.
    `emitted` must end with the EOS surface.
    """
    assert emitted[-1] == EOS_SURFACE
    non_rag = list(non_rag) if non_rag is not None else list(emitted)
    assert len(non_rag) == len(emitted)
    gen = ScriptedGenerator(fallback=fallback)
    for t in range(len(emitted)):
        prefix = emitted[:t]
        gen.on(question, [], prefix, non_rag[t])
        for text in doc_texts:
            surface = emitted[t]
            if dissent and text in dissent and t in dissent[text]:
                surface = dissent[text][t]
            gen.on(question, [text], prefix, surface)
    return gen


GATSBY_QUESTION = "what type of literature is the great gatsby"
GATSBY_PREFIX = ["The", "Great", "Gatsby", "is", "a"]


def gatsby_scenario(m=50):
    """Voting scenario where only document-informed voters know the answer.

    Every voter continues the shared five-token opening and then votes
    "novel"; the no-document path knows the opening but guesses "poem" for
    the sixth token. Answer sequence ends with EOS after "novel".
    """
    doc_texts = [
        f"the great gatsby is a novel by f scott fitzgerald copy {i}"
        for i in range(m)
    ]
    emitted = GATSBY_PREFIX + ["novel", EOS_SURFACE]
    non_rag = GATSBY_PREFIX + ["poem", EOS_SURFACE]
    gen = script_voting_scenario(GATSBY_QUESTION, doc_texts, emitted, non_rag)
    return GATSBY_QUESTION, make_corpus(doc_texts), gen


_NAMES = [
    "alice", "bruno", "carla", "dmitri", "elena", "farid", "greta", "hiro",
    "ines", "jonas", "kira", "luis", "mara", "nadia", "omar", "priya",
    "quentin", "rosa", "stefan", "tara",
]
_SYMPTOMS = [
    "persistent cough", "lower back pain", "blurred vision", "chronic fatigue",
    "skin rash", "joint swelling", "mild fever", "shortness of breath",
    "stomach cramps", "frequent headaches", "numb fingers", "sore throat",
]
_DRUGS = [
    "amoxil", "zentra", "covarol", "dalprex", "enzivan", "fluxetol",
    "gravitol", "helixir", "ibrumax", "jantoral",
]


def chatdoctor_text(rng: random.Random) -> str:
    name = rng.choice(_NAMES)
    age = rng.randrange(18, 90)
    symptom = rng.choice(_SYMPTOMS)
    drug = rng.choice(_DRUGS)
    dose = rng.randrange(100, 1000)
    hours = rng.choice([4, 6, 8, 12])
    days = rng.randrange(3, 21)
    return (
        f"patient {name} aged {age} reports {symptom} and asks about treatment "
        f"options ### you should take {dose} milligrams of {drug} every {hours} "
        f"hours and rest for {days} days"
    )


def build_chatdoctor(n_members: int, n_out: int, n_background: int, seed: int):
    """Synthetic patient-question corpus plus disjoint background texts.

    Returns (member_corpus, out_documents, background_texts); members and
    non-members come from the same template distribution, and background
    texts never enter the corpus.
    """
    rng = random.Random(seed)
    member_texts = [chatdoctor_text(rng) for _ in range(n_members)]
    out_texts = [chatdoctor_text(rng) for _ in range(n_out)]
    background = [chatdoctor_text(rng) for _ in range(n_background)]
    corpus = make_corpus(member_texts, prefix="in")
    out_docs = [
        Document(doc_id=f"out{i:03d}", text=text, owner_id=f"outsider{i:03d}")
        for i, text in enumerate(out_texts)
    ]
    return corpus, out_docs, background


@pytest.fixture
def rng0():
    return random.Random(0)
