"""Pairwise reasoning-quality judging and tie-splitting win rates."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Protocol, Sequence

from .rewards import KeywordTaxonomy, RewardWeights, total_reward
from .traces import QAInstance

JUDGE_INSTRUCTION = (
    "Given the audio context and two reasoning processes from Model A and Model B, "
    "try to determine which process is superior. A superior process is more logical, "
    "faithful to the audio, and follows a clearer analytical path. Focus on the quality "
    "of the reasoning, not just the final answer's correctness, and conclude with "
    "'Model A Wins', 'Model B Wins', or 'Tie'."
)

_VERDICT_RE = re.compile(r"\bmodel\s+a\s+wins\b|\bmodel\s+b\s+wins\b|\btie\b", re.IGNORECASE)


class Verdict(str, enum.Enum):
    A = "A"
    B = "B"
    TIE = "Tie"

    def swapped(self) -> "Verdict":
        return {Verdict.A: Verdict.B, Verdict.B: Verdict.A}.get(self, Verdict.TIE)


class UnparseableVerdict(ValueError):
    def __init__(self, reply: str):
        self.reply = reply
        super().__init__(f"no verdict phrase found in judge reply: {reply[:200]!r}")


class JudgeClient(Protocol):
    """Anything that turns a prompt into a reply, e.g. an adapter around a hosted model."""

    def complete(self, prompt: str) -> str: ...


@dataclass(frozen=True)
class ComparisonRecord:
    instance_id: str
    trace_a: str
    trace_b: str
    verdict: Verdict
    judge_id: str = "mock"

    def __post_init__(self):
        object.__setattr__(self, "verdict", Verdict(self.verdict))

    def to_record(self) -> dict:
        return {"instance_id": self.instance_id, "verdict": self.verdict.value, "judge_id": self.judge_id}


@dataclass(frozen=True)
class WinRateReport:
    a_wins: int
    b_wins: int
    ties: int
    total: int
    a_rate: Fraction
    b_rate: Fraction

    def to_dict(self) -> dict:
        return {
            "a_wins": self.a_wins, "b_wins": self.b_wins, "ties": self.ties, "total": self.total,
            "a_rate": float(self.a_rate), "b_rate": float(self.b_rate),
            "a_rate_exact": str(self.a_rate), "b_rate_exact": str(self.b_rate),
        }


def build_judge_prompt(instance: QAInstance, gold_answer: str, trace_a: str, trace_b: str) -> str:
    if not trace_a or not trace_b:
        raise ValueError("both traces must be non-empty")
    lines = [
        f"Audio context (caption concepts): {', '.join(instance.caption)}",
        f"Question: {instance.question}",
        "Choices:",
        *(f"  {letter}. {c.text}" for letter, c in zip("ABCD", instance.choices)),
        f"Correct answer: {gold_answer}",
        "",
        "Model A reasoning:",
        trace_a,
        "",
        "Model B reasoning:",
        trace_b,
        "",
        JUDGE_INSTRUCTION,
    ]
    return "\n".join(lines)


def parse_verdict(reply: str) -> Verdict:
    """The last conclusion phrase in ``reply`` wins."""
    matches = _VERDICT_RE.findall(reply)
    if not matches:
        raise UnparseableVerdict(reply)
    last = " ".join(matches[-1].lower().split())
    if last == "model a wins":
        return Verdict.A
    if last == "model b wins":
        return Verdict.B
    return Verdict.TIE


def judge_with_client(client: JudgeClient, instance: QAInstance, trace_a: str, trace_b: str) -> Verdict:
    prompt = build_judge_prompt(instance, instance.gold.text, trace_a, trace_b)
    return parse_verdict(client.complete(prompt))


def mock_judge(instance: QAInstance, trace_a: str, trace_b: str, weights: RewardWeights | None = None,
               taxonomy: KeywordTaxonomy | None = None, epsilon: float = 0.0) -> Verdict:
    """Offline stand-in: prefer the trace with the higher total reward."""
    if epsilon < 0:
        raise ValueError("epsilon must be >= 0")
    delta = total_reward(trace_a, instance, weights, taxonomy).total - total_reward(trace_b, instance, weights, taxonomy).total
    if abs(delta) <= epsilon:
        return Verdict.TIE
    return Verdict.A if delta > 0 else Verdict.B


def count_verdicts(verdicts: Iterable[Verdict | str]) -> tuple[int, int, int]:
    a = b = t = 0
    for v in verdicts:
        v = Verdict(v)
        if v is Verdict.A:
            a += 1
        elif v is Verdict.B:
            b += 1
        else:
            t += 1
    return a, b, t


def win_rates(a_wins: int, b_wins: int, ties: int) -> WinRateReport:
    total = a_wins + b_wins + ties
    if total <= 0 or min(a_wins, b_wins, ties) < 0:
        raise ValueError("need a positive number of comparisons with non-negative counts")
    half_ties = Fraction(ties, 2)
    a_rate = (a_wins + half_ties) / total
    b_rate = (b_wins + half_ties) / total
    return WinRateReport(a_wins, b_wins, ties, total, a_rate, b_rate)


def aggregate_win_rate(records: Sequence[ComparisonRecord]) -> WinRateReport:
    if not records:
        raise ValueError("no comparison records to aggregate")
    return win_rates(*count_verdicts(r.verdict for r in records))
