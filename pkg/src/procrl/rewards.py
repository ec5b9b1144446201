"""Multi-faceted reward suite for ``<think>``/``<answer>`` traces.

Every component is a pure function; :func:`total_reward` parses a raw trace and
combines the components under :class:`RewardWeights`.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import asdict, dataclass, fields
from functools import lru_cache
from importlib import resources
from typing import Any, Iterable, Mapping

from .text import concept_set, set_similarity
from .traces import ParsedTrace, QAInstance, parse_trace, think_length

LETTERS = "abcd"
SECTIONS = ("pattern", "logic", "domain")
RULE_KINDS = ("literal", "regex")

_SPACE_RE = re.compile(r"\s+")
_SIMPLE_WORD_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class RewardWeights:
    alpha_acc: float = 5.0
    alpha_format: float = 1.0
    alpha_consistency: float = 1.0
    alpha_keywords: float = 1.0
    alpha_overthink: float = 1.0
    l_max_output: int = 256

    def __post_init__(self):
        for f in fields(self):
            if f.name == "l_max_output":
                continue
            v = getattr(self, f.name)
            if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v) or v < 0:
                raise ValueError(f"{f.name} must be a finite non-negative number, got {v!r}")
        if isinstance(self.l_max_output, bool) or not isinstance(self.l_max_output, int) or self.l_max_output <= 0:
            raise ValueError(f"l_max_output must be a positive integer, got {self.l_max_output!r}")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "RewardWeights":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown reward weight field(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RewardBreakdown:
    acc: float
    format: float
    consistency: float
    pattern: float
    logic: float
    domain: float
    overthink: float
    total: float

    @property
    def keywords(self) -> float:
        return self.pattern + self.logic + self.domain

    def to_dict(self) -> dict[str, float]:
        return asdict(self)


# -- keyword taxonomy ---------------------------------------------------------


@dataclass(frozen=True)
class KeywordRule:
    id: str
    kind: str
    expression: str
    category: str = ""
    weight: float = 1.0

    def __post_init__(self):
        if self.kind not in RULE_KINDS:
            raise ValueError(f"rule {self.id!r}: kind must be one of {RULE_KINDS}, got {self.kind!r}")
        if not self.expression:
            raise ValueError(f"rule {self.id!r}: empty expression")
        w = self.weight
        if isinstance(w, bool) or not isinstance(w, (int, float)) or not math.isfinite(w) or w < 0:
            raise ValueError(f"rule {self.id!r}: weight must be finite and >= 0")
        if self.kind == "regex":
            try:
                re.compile(self.expression)
            except re.error as exc:
                raise ValueError(f"rule {self.id!r}: bad regular expression ({exc})") from None

    @property
    def is_simple_word(self) -> bool:
        return self.kind == "literal" and _SIMPLE_WORD_RE.fullmatch(self.expression.lower()) is not None

    def compile(self) -> re.Pattern:
        # applied to lowercased text
        if self.kind == "literal":
            return re.compile(r"(?<![a-z0-9])" + re.escape(self.expression.lower()) + r"(?![a-z0-9])")
        return re.compile(self.expression)


class _CompiledSection:
    __slots__ = ("words", "patterns")

    def __init__(self, rules: Iterable[KeywordRule]):
        self.words: list[tuple[str, float]] = []
        self.patterns: list[tuple[re.Pattern, float]] = []
        for r in rules:
            if r.is_simple_word:
                self.words.append((r.expression.lower(), float(r.weight)))
            else:
                self.patterns.append((r.compile(), float(r.weight)))

    def score(self, lowered: str, tokens: frozenset[str]) -> float:
        s = 0.0
        for w, weight in self.words:
            if w in tokens:
                s += weight
        for pat, weight in self.patterns:
            if pat.search(lowered):
                s += weight
        return s


class KeywordTaxonomy:
    """Three sections of keyword rules: pattern, logic and domain."""

    def __init__(self, pattern: Iterable[KeywordRule], logic: Iterable[KeywordRule], domain: Iterable[KeywordRule]):
        self.pattern = tuple(pattern)
        self.logic = tuple(logic)
        self.domain = tuple(domain)
        seen: set[str] = set()
        for r in self.rules():
            if r.id in seen:
                raise ValueError(f"duplicate taxonomy entry id {r.id!r}")
            seen.add(r.id)
        self._compiled = tuple(_CompiledSection(getattr(self, s)) for s in SECTIONS)

    def rules(self) -> tuple[KeywordRule, ...]:
        return self.pattern + self.logic + self.domain

    def score(self, think: str) -> tuple[float, float, float]:
        lowered = think.lower()
        tokens = frozenset(_SIMPLE_WORD_RE.findall(lowered))
        return tuple(c.score(lowered, tokens) for c in self._compiled)  # type: ignore[return-value]

    def matched_ids(self, think: str) -> list[str]:
        lowered = think.lower()
        return [r.id for r in self.rules() if r.compile().search(lowered)]

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "KeywordTaxonomy":
        sections = {}
        for name in SECTIONS:
            entries = doc.get(name)
            if not isinstance(entries, list):
                raise ValueError(f"taxonomy section {name!r} missing or not a list")
            rules = []
            for i, e in enumerate(entries):
                try:
                    rules.append(KeywordRule(
                        id=str(e["id"]), kind=e["kind"], expression=str(e["expression"]),
                        category=str(e.get("category", "")), weight=e.get("weight", 1.0),
                    ))
                except KeyError as exc:
                    raise ValueError(f"taxonomy {name}[{i}]: missing field {exc.args[0]!r}") from None
            sections[name] = rules
        return cls(**sections)

    def to_dict(self) -> dict[str, Any]:
        return {name: [asdict(r) for r in getattr(self, name)] for name in SECTIONS}

    def __eq__(self, other):
        return isinstance(other, KeywordTaxonomy) and self.rules() == other.rules() and \
            len(self.pattern) == len(other.pattern) and len(self.logic) == len(other.logic)

    def __repr__(self):
        return f"KeywordTaxonomy(pattern={len(self.pattern)}, logic={len(self.logic)}, domain={len(self.domain)})"


@lru_cache(maxsize=1)
def default_taxonomy() -> KeywordTaxonomy:
    text = resources.files("procrl").joinpath("data/taxonomy.json").read_text(encoding="utf-8")
    return KeywordTaxonomy.from_dict(json.loads(text))


# -- components ---------------------------------------------------------------


def normalize_answer(text: str) -> str:
    return _SPACE_RE.sub(" ", text.strip()).casefold()


def resolve_answer(answer: str, instance: QAInstance) -> int | None:
    """Index of the choice named by ``answer``, or None if it names none."""
    norm = normalize_answer(answer)
    if len(norm) == 1 and norm in LETTERS:
        return LETTERS.index(norm)
    for i, choice in enumerate(instance.choices):
        if norm == normalize_answer(choice.text):
            return i
    return None


def accuracy_reward(trace: ParsedTrace, instance: QAInstance) -> int:
    return int(resolve_answer(trace.answer, instance) == instance.gold_index)


def format_reward(trace: ParsedTrace) -> int:
    return int(trace.format_valid)


def question_context(instance: QAInstance) -> str:
    return " ".join([instance.question, *(c.text for c in instance.choices)])


def consistency_reward(trace: ParsedTrace, instance: QAInstance) -> float:
    think = concept_set(trace.think)
    if not think:
        return 0.0
    return (set_similarity(think, concept_set(trace.answer))
            + set_similarity(think, concept_set(question_context(instance))))


def keyword_reward(think: str, taxonomy: KeywordTaxonomy | None = None) -> tuple[float, float, float]:
    """``(pattern, logic, domain)``; each entry contributes its weight at most once."""
    return (taxonomy or default_taxonomy()).score(think)


def overthinking_penalty(think_len: int, l_max: int) -> float:
    if l_max <= 0:
        raise ValueError(f"l_max must be positive, got {l_max}")
    if think_len < 0:
        raise ValueError(f"think_len must be non-negative, got {think_len}")
    return 1.0 - think_len / l_max


def combine(acc, fmt, consistency, pattern, logic, domain, overthink, weights: RewardWeights) -> float:
    return (weights.alpha_acc * acc
            + weights.alpha_format * fmt
            + weights.alpha_consistency * consistency
            + weights.alpha_keywords * (pattern + logic + domain)
            + weights.alpha_overthink * overthink)


def score_trace(trace: ParsedTrace, instance: QAInstance, weights: RewardWeights | None = None,
                taxonomy: KeywordTaxonomy | None = None) -> RewardBreakdown:
    weights = weights or RewardWeights()
    acc = accuracy_reward(trace, instance)
    fmt = format_reward(trace)
    cons = consistency_reward(trace, instance)
    pattern, logic, domain = keyword_reward(trace.think, taxonomy)
    over = overthinking_penalty(think_length(trace), weights.l_max_output)
    total = combine(acc, fmt, cons, pattern, logic, domain, over, weights)
    return RewardBreakdown(float(acc), float(fmt), cons, pattern, logic, domain, over, total)


def total_reward(raw: str, instance: QAInstance, weights: RewardWeights | None = None,
                 taxonomy: KeywordTaxonomy | None = None) -> RewardBreakdown:
    return score_trace(parse_trace(raw), instance, weights, taxonomy)
