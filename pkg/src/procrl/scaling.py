"""Test-time scaling sweeps over the maximum think budget."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .policy import NoiseModel, TokenPools, ToyPolicy, sample_response
from .rewards import accuracy_reward
from .traces import QAInstance, parse_trace

CURVE_COLUMNS = ("budget", "mean_emitted_len", "accuracy", "n_eval")


@dataclass(frozen=True)
class CurvePoint:
    budget: int
    mean_emitted_len: float
    accuracy: float
    n_eval: int


@dataclass(frozen=True)
class ScalingCurve:
    points: tuple[CurvePoint, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))
        budgets = self.budgets
        if any(b <= a for a, b in zip(budgets, budgets[1:])):
            raise ValueError("curve budgets must be strictly increasing")

    @property
    def budgets(self) -> list[int]:
        return [p.budget for p in self.points]

    @property
    def accuracies(self) -> list[float]:
        return [p.accuracy for p in self.points]

    def __len__(self):
        return len(self.points)


def parse_budgets(spec: str) -> list[int]:
    """``"start:end:step"`` with both ends inclusive, or a comma-separated list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValueError(f"budget range must be start:end:step, got {spec!r}")
        start, end, step = (int(p) for p in parts)
        if step <= 0:
            raise ValueError("budget step must be positive")
        budgets = list(range(start, end + 1, step))
    else:
        budgets = [int(p) for p in spec.split(",") if p.strip()]
    check_budgets(budgets)
    return budgets


def check_budgets(budgets: Sequence[int]) -> None:
    if not budgets:
        raise ValueError("budget list is empty")
    if any(b < 0 for b in budgets):
        raise ValueError("budgets must be >= 0")
    if any(b <= a for a, b in zip(budgets, budgets[1:])):
        raise ValueError("budgets must be strictly increasing without duplicates")


def sweep(policy: ToyPolicy, eval_set: Sequence[QAInstance], budgets: Sequence[int],
          noise: NoiseModel | None = None, seed: int = 0, pools: TokenPools | None = None) -> ScalingCurve:
    """One sampled response per instance per budget.

    Instance ``i`` draws from the same random stream at every budget (common
    random numbers), so differences between points reflect the budget rather
    than resampling noise.
    """
    check_budgets(budgets)
    if not eval_set:
        raise ValueError("eval set is empty")
    noise = noise if noise is not None else NoiseModel()
    points = []
    for budget in budgets:
        correct = 0
        total_len = 0
        for i, inst in enumerate(eval_set):
            s = sample_response(policy, inst, budget, noise, np.random.default_rng([seed, 2, i]), pools)
            correct += accuracy_reward(parse_trace(s.raw), inst)
            total_len += s.think_len
        n = len(eval_set)
        points.append(CurvePoint(int(budget), total_len / n, correct / n, n))
    return ScalingCurve(tuple(points))


def sweet_spot(curve: ScalingCurve) -> int:
    """Budget with the highest accuracy; the smallest such budget on ties."""
    if not curve.points:
        raise ValueError("curve is empty")
    best = curve.points[0]
    for p in curve.points[1:]:
        if p.accuracy > best.accuracy:
            best = p
    return best.budget


def emit_curve(curve: ScalingCurve) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for p in curve.points:
        w.writerow([p.budget, f"{p.mean_emitted_len:.6f}", f"{p.accuracy:.6f}", p.n_eval])
    return buf.getvalue()


def parse_curve(text: str) -> ScalingCurve:
    rows = list(csv.DictReader(io.StringIO(text)))
    return ScalingCurve(tuple(
        CurvePoint(int(r["budget"]), float(r["mean_emitted_len"]), float(r["accuracy"]), int(r["n_eval"]))
        for r in rows
    ))
