"""Concept extraction and overlap similarity."""

from __future__ import annotations

import re

STOPWORDS_VERSION = "1"

# Frozen list; changing it changes every consistency score.
STOPWORDS = frozenset(
    """
    a an the and or but if of to in on at by for with from as into about
    is are was were be do has have had
    it its this that which who what
    i you he she we they her
    not no can will would should could may
    """.split()
)

_WORD_RE = re.compile(r"[a-z0-9]+")


def concept_set(text: str) -> frozenset[str]:
    return frozenset(w for w in _WORD_RE.findall(text.lower()) if w not in STOPWORDS)


def set_similarity(a: frozenset[str] | set[str], b: frozenset[str] | set[str]) -> float:
    """``|a & b| / max(|a|, |b|)``, with 0 whenever either side is empty."""
    if not a or not b:
        return 0.0
    return len(a & b) / max(len(a), len(b))


def semantic_similarity(x: str, y: str) -> float:
    return set_similarity(concept_set(x), concept_set(y))
