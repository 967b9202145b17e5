"""Word tokenization and answer normalization shared by retrieval and metrics."""

from __future__ import annotations

import re

_WORD_RE = re.compile(r"[a-z0-9]+(?:'[a-z0-9]+)?|<[a-z]+>")


def word_tokens(text: str) -> list[str]:
    """Lowercased word tokens; angle-bracketed markers like <eos> survive whole."""
    return _WORD_RE.findall(text.lower())


def normalize_answer(text: str) -> str:
    """Lowercase, strip punctuation, collapse whitespace."""
    return " ".join(word_tokens(text))
