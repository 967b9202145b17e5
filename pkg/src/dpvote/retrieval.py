"""Document corpus, TF-IDF retrieval, and the uniform voter partition.

One document belongs to one individual; a run retrieves the m*k most
relevant documents and splits them uniformly at random into m disjoint
shards of k, one per voter. The privacy argument needs exactly two things
from this module: the retrieval is deterministic, and the partition is a
uniform random permutation.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass

from .errors import DataError, InsufficientCorpusError, InvalidArgumentError
from .textutil import word_tokens


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    owner_id: str


class Corpus:
    """An ordered collection of documents with unique ids."""

    def __init__(self, documents: list[Document]):
        self.documents = list(documents)
        self._by_id: dict[str, Document] = {}
        for doc in self.documents:
            if doc.doc_id in self._by_id:
                raise DataError(f"duplicate doc_id {doc.doc_id!r} in corpus")
            self._by_id[doc.doc_id] = doc

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def get(self, doc_id: str) -> Document:
        return self._by_id[doc_id]

    @classmethod
    def from_jsonl(cls, path) -> "Corpus":
        """Load a corpus from JSONL with fields doc_id, text, owner_id."""
        documents = []
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as exc:
                    raise DataError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
                try:
                    documents.append(
                        Document(
                            doc_id=str(record["doc_id"]),
                            text=str(record["text"]),
                            owner_id=str(record["owner_id"]),
                        )
                    )
                except KeyError as exc:
                    raise DataError(f"{path}:{lineno}: missing field {exc}") from exc
        if not documents:
            raise DataError(f"{path}: corpus is empty")
        return cls(documents)


@dataclass(frozen=True)
class RetrievalResult:
    """Ranked doc ids, most relevant first, with non-increasing scores."""

    ranked: tuple[str, ...]
    scores: tuple[float, ...]


@dataclass(frozen=True)
class VoterPartition:
    """m disjoint shards of k doc ids each, in shuffled order."""

    subsets: tuple[tuple[str, ...], ...]


class TfidfIndex:
    """TF-IDF vectors over lowercased word tokens.

    idf(term) = ln(N / (1 + df)) + 1; document vectors use raw term counts
    weighted by idf, and similarity is the cosine.
    """

    def __init__(self, corpus: Corpus):
        if len(corpus) == 0:
            raise InvalidArgumentError("cannot index an empty corpus")
        self.corpus = corpus
        self._df: dict[str, int] = {}
        doc_terms: dict[str, dict[str, int]] = {}
        for doc in corpus:
            counts: dict[str, int] = {}
            for term in word_tokens(doc.text):
                counts[term] = counts.get(term, 0) + 1
            doc_terms[doc.doc_id] = counts
            for term in counts:
                self._df[term] = self._df.get(term, 0) + 1
        n = len(corpus)
        self._idf = {
            term: math.log(n / (1 + df)) + 1.0 for term, df in self._df.items()
        }
        self._vectors: dict[str, dict[str, float]] = {}
        self._norms: dict[str, float] = {}
        for doc_id, counts in doc_terms.items():
            vec = {term: tf * self._idf[term] for term, tf in counts.items()}
            self._vectors[doc_id] = vec
            self._norms[doc_id] = math.sqrt(sum(w * w for w in vec.values()))

    def vector(self, doc_id: str) -> dict[str, float]:
        return dict(self._vectors[doc_id])

    def question_vector(self, question: str) -> dict[str, float]:
        """Question TF-IDF restricted to corpus vocabulary."""
        counts: dict[str, int] = {}
        for term in word_tokens(question):
            if term in self._idf:
                counts[term] = counts.get(term, 0) + 1
        return {term: tf * self._idf[term] for term, tf in counts.items()}

    def similarity(self, question_vec: dict[str, float], doc_id: str) -> float:
        dvec = self._vectors[doc_id]
        dot = sum(w * dvec[t] for t, w in question_vec.items() if t in dvec)
        if dot == 0.0:
            return 0.0
        qnorm = math.sqrt(sum(w * w for w in question_vec.values()))
        dnorm = self._norms[doc_id]
        if qnorm == 0.0 or dnorm == 0.0:
            return 0.0
        return dot / (qnorm * dnorm)


def index_corpus(corpus: Corpus) -> TfidfIndex:
    return TfidfIndex(corpus)


def retrieve(index: TfidfIndex, question: str, count: int) -> RetrievalResult:
    """Top-`count` documents by cosine similarity, ties broken by doc_id."""
    if count < 1:
        raise InvalidArgumentError(f"count must be positive, got {count}")
    if count > len(index.corpus):
        raise InsufficientCorpusError(
            f"requested {count} documents but the corpus holds {len(index.corpus)}"
        )
    qvec = index.question_vector(question)
    scored = [(index.similarity(qvec, doc.doc_id), doc.doc_id) for doc in index.corpus]
    scored.sort(key=lambda pair: (-pair[0], pair[1]))
    top = scored[:count]
    return RetrievalResult(
        ranked=tuple(doc_id for _, doc_id in top),
        scores=tuple(score for score, _ in top),
    )


def partition(
    result: RetrievalResult, m: int, k: int, rng: random.Random
) -> VoterPartition:
    """Uniformly random split of the retrieved set into m shards of k.

    Fisher-Yates shuffle driven by the seeded source, then consecutive
    k-blocks; every permutation-induced partition is equally likely.
    """
    if m < 1 or k < 1:
        raise InvalidArgumentError("m and k must be positive")
    if len(result.ranked) != m * k:
        raise InvalidArgumentError(
            f"retrieved {len(result.ranked)} documents, need exactly m*k = {m * k}"
        )
    ids = list(result.ranked)
    rng.shuffle(ids)
    subsets = tuple(tuple(ids[i * k : (i + 1) * k]) for i in range(m))
    return VoterPartition(subsets=subsets)
