"""QA instances, reasoning traces and the ``<think>``/``<answer>`` output format."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from .io import DataError, atomic_write_text, iter_jsonl, jsonl_text

THINK_OPEN, THINK_CLOSE = "<think>", "</think>"
ANSWER_OPEN, ANSWER_CLOSE = "<answer>", "</answer>"
TAGS = (THINK_OPEN, THINK_CLOSE, ANSWER_OPEN, ANSWER_CLOSE)

N_CHOICES = 4

_THINK_RE = re.compile(r"<think>(.*?)</think>", re.DOTALL)
_ANSWER_RE = re.compile(r"<answer>(.*?)</answer>", re.DOTALL)
_STRICT_RE = re.compile(r"\s*<think>(.*?)</think>\s*<answer>(.*?)</answer>\s*", re.DOTALL)


@dataclass(frozen=True)
class Choice:
    text: str
    concepts: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "concepts", tuple(dict.fromkeys(self.concepts)))
        if not self.concepts:
            raise ValueError(f"choice {self.text!r} has an empty concept set")


@dataclass(frozen=True)
class QAInstance:
    """One multiple-choice question whose audio is proxied by a caption concept set."""

    id: str
    caption: tuple[str, ...]
    question: str
    choices: tuple[Choice, ...]
    gold_index: int

    def __post_init__(self):
        object.__setattr__(self, "caption", tuple(dict.fromkeys(self.caption)))
        object.__setattr__(self, "choices", tuple(self.choices))
        if not self.caption:
            raise ValueError(f"instance {self.id!r}: caption is empty")
        if len(self.choices) != N_CHOICES:
            raise ValueError(f"instance {self.id!r}: expected {N_CHOICES} choices, got {len(self.choices)}")
        if not (0 <= self.gold_index < N_CHOICES):
            raise ValueError(f"instance {self.id!r}: gold_index {self.gold_index} out of range")

    @property
    def gold(self) -> Choice:
        return self.choices[self.gold_index]

    def overlaps(self, concepts: Iterable[str] | None = None) -> list[int]:
        """Overlap of ``concepts`` (default: the caption) with each choice's concept set."""
        pool = set(self.caption if concepts is None else concepts)
        return [len(pool.intersection(c.concepts)) for c in self.choices]

    def has_unique_gold(self) -> bool:
        ov = self.overlaps()
        gold = ov[self.gold_index]
        return all(gold > v for i, v in enumerate(ov) if i != self.gold_index)

    def with_question(self, question: str) -> "QAInstance":
        return QAInstance(self.id, self.caption, question, self.choices, self.gold_index)

    def to_record(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "caption": list(self.caption),
            "question": self.question,
            "choices": [{"text": c.text, "concepts": list(c.concepts)} for c in self.choices],
            "gold_index": self.gold_index,
        }

    @classmethod
    def from_record(cls, rec: dict[str, Any]) -> "QAInstance":
        try:
            choices = tuple(Choice(str(c["text"]), tuple(c["concepts"])) for c in rec["choices"])
            gold = rec["gold_index"]
            if isinstance(gold, bool) or not isinstance(gold, int):
                raise ValueError("gold_index must be an integer")
            return cls(str(rec["id"]), tuple(rec["caption"]), str(rec["question"]), choices, gold)
        except KeyError as exc:
            raise ValueError(f"missing field {exc.args[0]!r}") from None
        except TypeError as exc:
            raise ValueError(str(exc)) from None


@dataclass(frozen=True)
class ParsedTrace:
    think: str
    answer: str
    raw: str = field(default="", compare=False)
    format_valid: bool = True


def parse_trace(raw: str) -> ParsedTrace:
    """Split ``raw`` into think and answer text.

    Never raises. The first think and first answer segment are extracted even
    when the overall structure is malformed; ``format_valid`` is true only for
    exactly one think segment followed by exactly one answer segment with
    nothing but whitespace around them.
    """
    think_m = _THINK_RE.search(raw)
    answer_m = _ANSWER_RE.search(raw)
    think = think_m.group(1) if think_m else ""
    answer = answer_m.group(1) if answer_m else ""
    valid = (
        all(raw.count(tag) == 1 for tag in TAGS)
        and _STRICT_RE.fullmatch(raw) is not None
    )
    return ParsedTrace(think=think, answer=answer, raw=raw, format_valid=valid)


def render_trace(trace: ParsedTrace) -> str:
    for name in ("think", "answer"):
        text = getattr(trace, name)
        for tag in TAGS:
            if tag in text:
                raise ValueError(f"{name} text embeds the delimiter {tag!r}")
    return f"{THINK_OPEN}{trace.think}{THINK_CLOSE}{ANSWER_OPEN}{trace.answer}{ANSWER_CLOSE}"


def think_length(trace: ParsedTrace | str) -> int:
    """Reasoning length in whitespace-delimited words."""
    think = trace if isinstance(trace, str) else trace.think
    return len(think.split())


# -- record files -------------------------------------------------------------


def read_instances(path: str | os.PathLike) -> list[QAInstance]:
    out = []
    seen = set()
    for lineno, rec in iter_jsonl(path):
        try:
            inst = QAInstance.from_record(rec)
        except ValueError as exc:
            raise DataError(str(exc), path, lineno) from None
        if inst.id in seen:
            raise DataError(f"duplicate instance id {inst.id!r}", path, lineno)
        seen.add(inst.id)
        out.append(inst)
    return out


def write_instances(path: str | os.PathLike, instances: Sequence[QAInstance]) -> None:
    atomic_write_text(path, jsonl_text(inst.to_record() for inst in instances))


def read_traces(path: str | os.PathLike) -> list[tuple[int, str, str]]:
    """Return ``(line_number, instance_id, raw)`` triples."""
    out = []
    for lineno, rec in iter_jsonl(path):
        if "instance_id" not in rec or "raw" not in rec:
            raise DataError("trace record needs 'instance_id' and 'raw'", path, lineno)
        if not isinstance(rec["raw"], str):
            raise DataError("'raw' must be a string", path, lineno)
        out.append((lineno, str(rec["instance_id"]), rec["raw"]))
    return out


def write_traces(path: str | os.PathLike, traces: Iterable[tuple[str, str]]) -> None:
    atomic_write_text(path, jsonl_text({"instance_id": i, "raw": r} for i, r in traces))
