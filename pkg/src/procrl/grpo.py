"""Group-relative policy optimization for :class:`~procrl.policy.ToyPolicy`.

Per training example the loss is

    (1/K) * -sum_k A_k * log pi(s_k)  +  beta * KL(pi || pi_ref)

with ``A_k = R_k - mean(R)``. Gradients are accumulated over the mini-batch and
a plain SGD step of size ``learning_rate / |B|`` is taken.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .policy import (NoiseModel, Sample, TokenPools, ToyPolicy, grad_kl_divergence, grad_log_prob,
                     kl_divergence, log_prob, sample_response)
from .rewards import KeywordTaxonomy, RewardBreakdown, RewardWeights, default_taxonomy, score_trace
from .synthetic import reasoning_answer_agreement
from .traces import QAInstance, parse_trace

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iteration", "mean_reward", "accuracy", "consistency", "mean_think_len", "kl", "loss")


class NumericalError(FloatingPointError):
    """Raised when a loss or gradient becomes NaN or infinite."""

    def __init__(self, iteration: int, what: str):
        self.iteration = iteration
        super().__init__(f"non-finite {what} at iteration {iteration}")


@dataclass(frozen=True)
class TrainConfig:
    group_size: int = 8
    learning_rate: float = 1e-5
    batch_size: int = 32
    kl_beta: float = 0.04
    iterations: int = 100
    seed: int = 0
    max_think_len: int = 64
    weights: RewardWeights = field(default_factory=RewardWeights)
    noise: NoiseModel = field(default_factory=NoiseModel)

    def __post_init__(self):
        def is_int(v):
            return isinstance(v, (int, np.integer)) and not isinstance(v, bool)

        if not is_int(self.group_size) or self.group_size < 2:
            raise ValueError("group_size must be an integer >= 2")
        if not is_int(self.batch_size) or self.batch_size < 1:
            raise ValueError("batch_size must be a positive integer")
        if not is_int(self.iterations) or self.iterations < 0:
            raise ValueError("iterations must be a non-negative integer")
        if not is_int(self.max_think_len) or self.max_think_len < 0:
            raise ValueError("max_think_len must be a non-negative integer")
        if not is_int(self.seed):
            raise ValueError("seed must be an integer")
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise ValueError("learning_rate must be positive and finite")
        if not (isinstance(self.kl_beta, (int, float)) and self.kl_beta >= 0 and math.isfinite(self.kl_beta)):
            raise ValueError("kl_beta must be finite and >= 0")

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown train config field(s): {', '.join(unknown)}")
        d = dict(d)
        if "weights" in d:
            d["weights"] = RewardWeights.from_dict(d["weights"])
        if "noise" in d:
            d["noise"] = NoiseModel(**d["noise"])
        return cls(**d)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["weights"] = self.weights.to_dict()
        d["noise"] = asdict(self.noise)
        return d


@dataclass(frozen=True, eq=False)
class RolloutGroup:
    instance_id: str
    samples: tuple[Sample, ...]
    breakdowns: tuple[RewardBreakdown, ...]
    advantages: np.ndarray
    logps: np.ndarray
    log_ratios: np.ndarray  # per-sample log pi/pi_ref, a sampled KL estimate (diagnostic)

    @property
    def totals(self) -> np.ndarray:
        return np.array([b.total for b in self.breakdowns])

    @property
    def raws(self) -> list[str]:
        return [s.raw for s in self.samples]


@dataclass
class TrainLog:
    records: list[dict[str, float]] = field(default_factory=list)

    def append(self, record: dict[str, float]) -> None:
        if self.records and record["iteration"] <= self.records[-1]["iteration"]:
            raise ValueError("iteration index must increase")
        self.records.append(record)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> list[float]:
        return [r[name] for r in self.records]

    def to_csv(self) -> str:
        lines = [",".join(LOG_COLUMNS)]
        for r in self.records:
            lines.append(",".join(str(r["iteration"]) if c == "iteration" else repr(float(r[c])) for c in LOG_COLUMNS))
        return "\n".join(lines) + "\n"


# -- group operations -----------------------------------------------------------


def sample_group(policy: ToyPolicy, instance: QAInstance, k: int, max_think_len: int,
                 rng: np.random.Generator, noise: NoiseModel | None = None,
                 pools: TokenPools | None = None) -> list[Sample]:
    if k < 2:
        raise ValueError("group size must be >= 2")
    noise = noise if noise is not None else NoiseModel()
    return [sample_response(policy, instance, max_think_len, noise, rng, pools) for _ in range(k)]


def compute_advantages(totals: Sequence[float]) -> np.ndarray:
    totals = np.asarray(totals, dtype=float)
    if totals.ndim != 1 or len(totals) < 2:
        raise ValueError("advantages need at least two rewards in a group")
    return totals - totals.mean()


def build_group(policy: ToyPolicy, reference: ToyPolicy, instance: QAInstance, samples: Sequence[Sample],
                weights: RewardWeights, taxonomy: KeywordTaxonomy) -> RolloutGroup:
    breakdowns = tuple(score_trace(parse_trace(s.raw), instance, weights, taxonomy) for s in samples)
    adv = compute_advantages([b.total for b in breakdowns])
    logps = np.array([s.logp for s in samples])
    ref_logps = np.array([log_prob(reference, s) for s in samples])
    return RolloutGroup(instance.id, tuple(samples), breakdowns, adv, logps, logps - ref_logps)


def policy_gradient_loss(group: RolloutGroup, policy: ToyPolicy | None = None) -> float:
    """``-(1/K) sum_k A_k log pi(s_k)``; log-probs are re-evaluated under ``policy`` if given."""
    logps = group.logps if policy is None else np.array([log_prob(policy, s) for s in group.samples])
    return float(-np.dot(group.advantages, logps) / len(group.samples))


def policy_gradient_grad(group: RolloutGroup, policy: ToyPolicy) -> np.ndarray:
    g = np.zeros(policy.n_params)
    for a, s in zip(group.advantages, group.samples):
        if a != 0.0:
            g -= a * grad_log_prob(policy, s)
    return g / len(group.samples)


def kl_term(policy: ToyPolicy, reference: ToyPolicy, instance: QAInstance) -> float:
    return kl_divergence(policy, reference, instance)


def example_loss(policy: ToyPolicy, reference: ToyPolicy, group: RolloutGroup, instance: QAInstance,
                 kl_beta: float) -> float:
    return policy_gradient_loss(group, policy) + kl_beta * kl_term(policy, reference, instance)


def example_grad(policy: ToyPolicy, reference: ToyPolicy, group: RolloutGroup, instance: QAInstance,
                 kl_beta: float) -> np.ndarray:
    g = policy_gradient_grad(group, policy)
    if kl_beta:
        g = g + kl_beta * grad_kl_divergence(policy, reference, instance)
    return g


# -- training loop ----------------------------------------------------------------


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start:start + batch_size]


def example_rng(seed: int, iteration: int, position: int) -> np.random.Generator:
    """Independent stream per (iteration, batch position); lets examples run in any order."""
    return np.random.default_rng([seed, 1, iteration, position])


def train(dataset: Sequence[QAInstance], policy: ToyPolicy, reference_policy: ToyPolicy, config: TrainConfig,
          taxonomy: KeywordTaxonomy | None = None, pools: TokenPools | None = None,
          callback: Callable[[int, ToyPolicy, dict], None] | None = None) -> tuple[ToyPolicy, TrainLog]:
    if not dataset:
        raise ValueError("dataset is empty")
    if not policy.same_support(reference_policy):
        raise ValueError("policy and reference policy have different supports")
    taxonomy = taxonomy or default_taxonomy()
    log = TrainLog()
    batches = _batches(len(dataset), config.batch_size, np.random.default_rng([config.seed, 0]))
    theta = policy.params

    for it in range(config.iterations):
        current = policy.with_params(theta)
        batch = next(batches)
        grad = np.zeros_like(theta)
        stats = np.zeros(7)  # reward, acc, consistency, think_len, agreement, kl, loss
        for pos, idx in enumerate(batch):
            inst = dataset[idx]
            samples = sample_group(current, inst, config.group_size, config.max_think_len,
                                   example_rng(config.seed, it, pos), config.noise, pools)
            group = build_group(current, reference_policy, inst, samples, config.weights, taxonomy)
            kl = kl_term(current, reference_policy, inst)
            loss = policy_gradient_loss(group) + config.kl_beta * kl
            grad += example_grad(current, reference_policy, group, inst, config.kl_beta)
            agree = np.mean([reasoning_answer_agreement(parse_trace(s.raw), inst) for s in samples])
            stats += (
                group.totals.mean(),
                np.mean([b.acc for b in group.breakdowns]),
                np.mean([b.consistency for b in group.breakdowns]),
                np.mean([s.think_len for s in samples]),
                agree, kl, loss,
            )
        stats /= len(batch)
        if not np.isfinite(stats[-1]):
            raise NumericalError(it, "loss")
        if not np.all(np.isfinite(grad)):
            raise NumericalError(it, "gradient")
        with np.errstate(over="ignore", invalid="ignore"):
            theta = theta - config.learning_rate * grad / len(batch)
        if not np.all(np.isfinite(theta)):
            raise NumericalError(it, "parameters")
        record = {
            "iteration": it,
            "mean_reward": float(stats[0]),
            "accuracy": float(stats[1]),
            "consistency": float(stats[2]),
            "mean_think_len": float(stats[3]),
            "agreement": float(stats[4]),
            "kl": float(stats[5]),
            "loss": float(stats[6]),
        }
        log.append(record)
        if callback is not None:
            callback(it, current, record)
        if it % 50 == 0:
            logger.debug("iter %d reward=%.3f acc=%.3f kl=%.4f", it, stats[0], stats[1], stats[5])

    return policy.with_params(theta), log
