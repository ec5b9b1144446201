"""Synthetic audio-QA proxy task: instance generation, augmentation, diagnostics."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .policy import DOMAIN_WORDS, LOGIC_WORDS, NOISE_WORDS, PATTERN_WORDS
from .rewards import default_taxonomy, resolve_answer
from .text import STOPWORDS, concept_set
from .traces import Choice, ParsedTrace, QAInstance

_CONSONANTS = "bdfgklmnprstvz"
_VOWELS = "aeiou"

BASE_QUESTIONS = (
    "Which source produces the sound heard in this clip?",
    "What is making the main sound in the recording?",
    "Which of these best describes what is heard?",
    "What can be heard most clearly in this audio?",
)


@lru_cache(maxsize=1)
def concept_vocabulary() -> tuple[str, ...]:
    """Deterministic pool of CVCV pseudo-words disjoint from every reserved word."""
    reserved = set(STOPWORDS) | set(PATTERN_WORDS + LOGIC_WORDS + DOMAIN_WORDS + NOISE_WORDS)
    for rule in default_taxonomy().rules():
        reserved.update(concept_set(rule.expression))
    syllables = [c + v for c, v in itertools.product(_CONSONANTS, _VOWELS)]
    return tuple(a + b for a, b in itertools.product(syllables, syllables) if a + b not in reserved)


@dataclass(frozen=True)
class TaskShape:
    """How many concepts each choice and caption carry."""

    concepts_per_choice: int = 3
    caption_gold: int = 2
    caption_distractor: int = 1
    caption_background: int = 2

    def __post_init__(self):
        if not (0 < self.caption_gold <= self.concepts_per_choice):
            raise ValueError("caption_gold must lie in [1, concepts_per_choice]")
        if not (0 <= self.caption_distractor < self.caption_gold):
            raise ValueError("caption_distractor must be smaller than caption_gold")
        if self.caption_background < 0:
            raise ValueError("caption_background must be >= 0")

    @property
    def words_per_instance(self) -> int:
        return 4 * self.concepts_per_choice + self.caption_background


def generate_dataset(seed: int, n: int, vocab_size: int = 400, shape: TaskShape = TaskShape()) -> list[QAInstance]:
    """``n`` instances whose gold choice uniquely maximizes caption overlap."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    vocab = concept_vocabulary()
    if vocab_size > len(vocab):
        raise ValueError(f"vocab_size {vocab_size} exceeds the {len(vocab)} available concept words")
    if vocab_size < shape.words_per_instance:
        raise ValueError(f"vocab_size {vocab_size} cannot hold {shape.words_per_instance} distinct "
                         "concepts per instance; unique-gold construction impossible")
    vocab = vocab[:vocab_size]
    rng = np.random.default_rng(seed)
    k = shape.concepts_per_choice
    out = []
    for i in range(n):
        words = [vocab[j] for j in rng.choice(vocab_size, size=shape.words_per_instance, replace=False)]
        concepts = [tuple(words[c * k:(c + 1) * k]) for c in range(4)]
        background = words[4 * k:]
        gold = int(rng.integers(4))
        caption = list(concepts[gold][:shape.caption_gold])
        for c in range(4):
            if c != gold:
                caption.extend(concepts[c][:shape.caption_distractor])
        caption.extend(background)
        caption = [caption[j] for j in rng.permutation(len(caption))]
        choices = tuple(Choice(" ".join(cs), cs) for cs in concepts)
        question = BASE_QUESTIONS[int(rng.integers(len(BASE_QUESTIONS)))]
        inst = QAInstance(f"syn-{seed}-{i:05d}", tuple(caption), question, choices, gold)
        if not inst.has_unique_gold():  # unreachable given TaskShape's invariants
            raise ValueError(f"instance {inst.id} lost its unique gold choice")
        out.append(inst)
    return out


# -- augmentation --------------------------------------------------------------


@dataclass(frozen=True)
class Template:
    name: str
    pattern: str

    def __post_init__(self):
        if "{choices}" not in self.pattern:
            raise ValueError(f"template {self.name!r} lacks a {{choices}} slot")

    def fill(self, instance: QAInstance) -> str:
        return self.pattern.replace("{choices}", ", ".join(c.text for c in instance.choices))


DEFAULT_TEMPLATES = (
    Template("temporal", "Which sound source appears most prominently in the temporal sequence: {choices}?"),
    Template("counting", "Which option has the highest occurrence frequency among: {choices}?"),
    Template("comparative", "Which sound demonstrates the strongest relationship with other audio elements: {choices}?"),
)


class TemplateSet(tuple):
    """Ordered, non-empty collection of :class:`Template`."""

    def __new__(cls, templates: Iterable[Template] = DEFAULT_TEMPLATES):
        templates = tuple(templates)
        if not templates:
            raise ValueError("template set is empty")
        names = [t.name for t in templates]
        if len(set(names)) != len(names):
            raise ValueError("template names must be unique")
        return super().__new__(cls, templates)

    @classmethod
    def from_dict(cls, doc: Mapping[str, Any]) -> "TemplateSet":
        entries = doc.get("templates")
        if not isinstance(entries, list):
            raise ValueError("templates document needs a 'templates' list")
        try:
            return cls(Template(str(e["name"]), str(e["pattern"])) for e in entries)
        except (KeyError, TypeError) as exc:
            raise ValueError(f"template entry missing field {exc}") from None

    def to_dict(self) -> dict[str, Any]:
        return {"templates": [{"name": t.name, "pattern": t.pattern} for t in self]}


def augment(instance: QAInstance, templates: Sequence[Template] | None = None) -> list[QAInstance]:
    templates = TemplateSet(templates if templates is not None else DEFAULT_TEMPLATES)
    return [
        QAInstance(f"{instance.id}~{t.name}", instance.caption, t.fill(instance), instance.choices, instance.gold_index)
        for t in templates
    ]


# -- diagnostics ---------------------------------------------------------------


def supported_choice(think: str, instance: QAInstance) -> int | None:
    """Choice whose concepts the think text overlaps most; None on ties or no support."""
    ov = instance.overlaps(concept_set(think))
    best = max(ov)
    if best == 0 or ov.count(best) > 1:
        return None
    return ov.index(best)


def reasoning_answer_agreement(trace: ParsedTrace, instance: QAInstance) -> int:
    supported = supported_choice(trace.think, instance)
    return int(supported is not None and supported == resolve_answer(trace.answer, instance))
