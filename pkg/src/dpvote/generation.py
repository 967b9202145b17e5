"""Next-token generators.

A generator answers `next_token(ctx)` for a context of (question, retrieved
documents, generated prefix). Three implementations: a scripted lookup table
for tests, a word-level n-gram model for desk-scale experiments, and an HTTP
client for real completion backends. Scripted and n-gram generators are pure
functions of (model, context); all generators share one greedy-decoding
contract: exactly one token per call.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from typing import Sequence

import httpx

from .errors import (
    BackendError,
    ContextOverflowError,
    InvalidArgumentError,
)
from .retrieval import Document
from .textutil import word_tokens

EOS_SURFACE = "<eos>"


@dataclass(frozen=True)
class Token:
    id: int
    surface: str


class Vocabulary:
    """Token surface <-> id mapping with a distinguished EOS token at id 0.

    Ids are assigned in order of first sight; every addition is journaled so
    a run can record which step introduced which surface form.
    """

    def __init__(self) -> None:
        self._by_surface: dict[str, Token] = {}
        self._tokens: list[Token] = []
        self.journal: list[str] = []
        self.add(EOS_SURFACE)

    def add(self, surface: str) -> Token:
        token = self._by_surface.get(surface)
        if token is None:
            token = Token(id=len(self._tokens), surface=surface)
            self._by_surface[surface] = token
            self._tokens.append(token)
            self.journal.append(surface)
        return token

    def get(self, surface: str) -> Token | None:
        return self._by_surface.get(surface)

    def token(self, token_id: int) -> Token:
        return self._tokens[token_id]

    @property
    def eos(self) -> Token:
        return self._tokens[0]

    def __len__(self) -> int:
        return len(self._tokens)

    def __contains__(self, surface: str) -> bool:
        return surface in self._by_surface


@dataclass(frozen=True)
class GenerationContext:
    """Inputs to one next-token call; documents may be empty (the no-context case)."""

    question: str
    documents: tuple[Document, ...] = ()
    prefix: tuple[Token, ...] = ()


DEFAULT_TEMPLATE = "{documents}\nQuestion: {question}\nAnswer: {prefix}"


@dataclass(frozen=True)
class PromptRendering:
    """Prompt template with {documents}, {question}, {prefix} placeholders.

    Documents are joined by newlines and the prefix by single spaces, so the
    rendering is injective in its inputs given the fixed delimiters.
    """

    template: str = DEFAULT_TEMPLATE

    def render(
        self, question: str, doc_texts: Sequence[str], prefix: Sequence[str]
    ) -> str:
        return self.template.format(
            documents="\n".join(doc_texts),
            question=question,
            prefix=" ".join(prefix),
        )


def render_context(rendering: PromptRendering, ctx: GenerationContext) -> str:
    return rendering.render(
        ctx.question,
        [doc.text for doc in ctx.documents],
        [tok.surface for tok in ctx.prefix],
    )


def context_key(rendering: PromptRendering, ctx: GenerationContext) -> str:
    """Stable hash of the rendered context, used as the scripted-table key."""
    rendered = render_context(rendering, ctx)
    return hashlib.sha256(rendered.encode("utf-8")).hexdigest()


def fit_documents(
    rendering: PromptRendering,
    ctx: GenerationContext,
    window: int | None,
) -> GenerationContext:
    """Drop oldest documents until the rendered prompt fits the word window."""
    if window is None:
        return ctx
    current = ctx
    while len(word_tokens(render_context(rendering, current))) > window:
        if not current.documents:
            raise ContextOverflowError(
                f"prompt exceeds the generator window of {window} words"
            )
        current = GenerationContext(
            question=current.question,
            documents=current.documents[1:],
            prefix=current.prefix,
        )
    return current


class ScriptedGenerator:
    """Deterministic lookup-table generator for tests and worked examples.

    The table maps hashes of rendered contexts to token surfaces; contexts
    with no entry yield the configured fallback token.
    """

    def __init__(
        self,
        vocab: Vocabulary | None = None,
        fallback: str = EOS_SURFACE,
        rendering: PromptRendering | None = None,
        window: int | None = None,
    ):
        self.vocab = vocab or Vocabulary()
        self.rendering = rendering or PromptRendering()
        self.fallback = fallback
        self.window = window
        self._table: dict[str, str] = {}
        self.vocab.add(fallback)

    def on(
        self,
        question: str,
        doc_texts: Sequence[str],
        prefix: Sequence[str],
        token_surface: str,
    ) -> "ScriptedGenerator":
        """Register the token to emit for one exact context."""
        rendered = self.rendering.render(question, doc_texts, prefix)
        key = hashlib.sha256(rendered.encode("utf-8")).hexdigest()
        self._table[key] = token_surface
        self.vocab.add(token_surface)
        return self

    def next_token(self, ctx: GenerationContext) -> Token:
        ctx = fit_documents(self.rendering, ctx, self.window)
        surface = self._table.get(context_key(self.rendering, ctx), self.fallback)
        return self.vocab.add(surface)

    def save(self, path) -> None:
        payload = {
            "fallback": self.fallback,
            "template": self.rendering.template,
            "entries": dict(sorted(self._table.items())),
        }
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_json(cls, path, vocab: Vocabulary | None = None) -> "ScriptedGenerator":
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        gen = cls(
            vocab=vocab,
            fallback=payload.get("fallback", EOS_SURFACE),
            rendering=PromptRendering(payload.get("template", DEFAULT_TEMPLATE)),
        )
        gen._table = {str(k): str(v) for k, v in payload.get("entries", {}).items()}
        for surface in gen._table.values():
            gen.vocab.add(surface)
        return gen


class NgramGenerator:
    """Word-level add-alpha n-gram model with greedy decoding.

    The conditional distribution at each step merges the trained counts with
    counts harvested from the retrieved documents in the context (weighted by
    `context_weight`), so two contexts that differ only in their documents can
    disagree; that disagreement is exactly what the voting layer aggregates.
    Backoff walks from the longest context window down to the unigram level,
    using the first level with any continuation mass. Ties break by token id.
    """

    def __init__(self, order: int, alpha: float, context_weight: float = 8.0):
        if order < 1:
            raise InvalidArgumentError(f"order must be >= 1, got {order}")
        if not alpha > 0:
            raise InvalidArgumentError(f"alpha must be positive, got {alpha}")
        if context_weight < 0:
            raise InvalidArgumentError("context_weight must be non-negative")
        self.order = order
        self.alpha = alpha
        self.context_weight = context_weight
        self.vocab = Vocabulary()
        self.rendering = PromptRendering()
        self.window: int | None = None
        self._counts: dict[tuple[str, ...], dict[str, int]] = {}
        self._doc_cache: dict[str, dict[tuple[str, ...], dict[str, int]]] = {}

    def _absorb(
        self,
        counts: dict[tuple[str, ...], dict[str, int]],
        words: list[str],
    ) -> None:
        terminated = words + [EOS_SURFACE]
        for i, nxt in enumerate(terminated):
            for span in range(min(self.order - 1, i) + 1):
                key = tuple(terminated[i - span : i])
                bucket = counts.setdefault(key, {})
                bucket[nxt] = bucket.get(nxt, 0) + 1

    def train(self, corpus_texts: Sequence[str]) -> "NgramGenerator":
        if not corpus_texts:
            raise InvalidArgumentError("training corpus must be non-empty")
        for text in corpus_texts:
            words = word_tokens(text)
            for word in words:
                self.vocab.add(word)
            self._absorb(self._counts, words)
        return self

    def _doc_counts(self, text: str) -> dict[tuple[str, ...], dict[str, int]]:
        cached = self._doc_cache.get(text)
        if cached is None:
            cached = {}
            words = word_tokens(text)
            for word in words:
                self.vocab.add(word)
            self._absorb(cached, words)
            self._doc_cache[text] = cached
        return cached

    def _continuations(
        self, window: tuple[str, ...], doc_texts: Sequence[str]
    ) -> dict[str, float]:
        merged: dict[str, float] = {}
        for surface, count in self._counts.get(window, {}).items():
            merged[surface] = merged.get(surface, 0.0) + count
        for text in doc_texts:
            for surface, count in self._doc_counts(text).get(window, {}).items():
                merged[surface] = merged.get(surface, 0.0) + self.context_weight * count
        return merged

    def conditional(
        self, surface: str, context_words: Sequence[str], doc_texts: Sequence[str] = ()
    ) -> float:
        """Add-alpha smoothed probability at the longest context with mass."""
        for span in range(min(self.order - 1, len(context_words)), -1, -1):
            window = tuple(context_words[len(context_words) - span :])
            merged = self._continuations(window, doc_texts)
            total = sum(merged.values())
            if total > 0 or span == 0:
                return (merged.get(surface, 0.0) + self.alpha) / (
                    total + self.alpha * len(self.vocab)
                )
        raise AssertionError("unreachable: unigram level always terminates")

    def next_token(self, ctx: GenerationContext) -> Token:
        ctx = fit_documents(self.rendering, ctx, self.window)
        doc_texts = [doc.text for doc in ctx.documents]
        for text in doc_texts:
            self._doc_counts(text)
        context_words: list[str] = []
        for text in doc_texts:
            context_words.extend(word_tokens(text))
        context_words.extend(word_tokens(ctx.question))
        context_words.extend(tok.surface for tok in ctx.prefix)
        for span in range(min(self.order - 1, len(context_words)), -1, -1):
            window = tuple(context_words[len(context_words) - span :])
            merged = self._continuations(window, doc_texts)
            if not merged:
                continue
            best = min(
                merged.items(),
                key=lambda kv: (-kv[1], self.vocab.add(kv[0]).id),
            )
            return self.vocab.add(best[0])
        return self.vocab.eos


def train_ngram(
    corpus_texts: Sequence[str],
    order: int,
    alpha: float,
    context_weight: float = 8.0,
) -> NgramGenerator:
    """Train a word-level n-gram generator with add-alpha smoothing."""
    return NgramGenerator(order, alpha, context_weight).train(corpus_texts)


class RemoteGenerator:
    """Client for a completion-style HTTP backend.

    Sends {model, prompt, max_tokens: 1, temperature: 0} and reads the
    completion text at `response_path` (dotted keys, integers index arrays;
    default "choices.0.text"). The first whitespace-delimited piece of the
    completion becomes the token; an empty completion maps to EOS. New
    surface forms extend the vocabulary on first sight and land in the
    vocabulary journal, which runs record per step.

    5xx responses and transport failures are retried up to `retries` times;
    4xx responses and unusable payloads surface immediately.
    """

    def __init__(
        self,
        endpoint: str,
        model: str,
        vocab: Vocabulary | None = None,
        rendering: PromptRendering | None = None,
        response_path: str = "choices.0.text",
        auth_env: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        window: int | None = None,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.model = model
        self.vocab = vocab or Vocabulary()
        self.rendering = rendering or PromptRendering()
        self.response_path = response_path
        self.auth_env = auth_env
        self.retries = retries
        self.window = window
        self._client = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._client.close()

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.auth_env:
            token = os.environ.get(self.auth_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _extract(self, payload: object) -> str:
        node = payload
        for part in self.response_path.split("."):
            try:
                if isinstance(node, list):
                    node = node[int(part)]
                elif isinstance(node, dict):
                    node = node[part]
                else:
                    raise KeyError(part)
            except (KeyError, IndexError, ValueError) as exc:
                raise BackendError(
                    f"response field {self.response_path!r} missing at {part!r}",
                    status=200,
                    body=json.dumps(payload)[:200],
                ) from exc
        if not isinstance(node, str):
            raise BackendError(
                f"response field {self.response_path!r} is not text",
                status=200,
                body=json.dumps(payload)[:200],
            )
        return node

    def next_token(self, ctx: GenerationContext) -> Token:
        ctx = fit_documents(self.rendering, ctx, self.window)
        payload = {
            "model": self.model,
            "prompt": render_context(self.rendering, ctx),
            "max_tokens": 1,
            "temperature": 0,
        }
        last_error: BackendError | None = None
        for _ in range(self.retries + 1):
            try:
                response = self._client.post(
                    self.endpoint, json=payload, headers=self._headers()
                )
            except httpx.HTTPError as exc:
                last_error = BackendError(f"transport failure: {exc}")
                continue
            if 200 <= response.status_code < 300:
                text = self._extract(response.json())
                pieces = text.split()
                surface = pieces[0] if pieces else EOS_SURFACE
                return self.vocab.add(surface)
            error = BackendError(
                f"backend returned HTTP {response.status_code}",
                status=response.status_code,
                body=response.text,
            )
            if response.status_code < 500:
                raise error
            last_error = error
        assert last_error is not None
        raise last_error
