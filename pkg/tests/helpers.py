"""Shared oracles and cached experiment runs for the test modules."""

from __future__ import annotations

from dataclasses import replace
from functools import lru_cache

import numpy as np

from procrl.grpo import (RolloutGroup, TrainConfig, build_group, compute_advantages, example_grad, example_loss,
                         sample_group, train)
from procrl.policy import CATEGORIES, NoiseModel, ToyPolicy, sample_response
from procrl.rewards import RewardWeights, accuracy_reward, default_taxonomy
from procrl.synthetic import generate_dataset, reasoning_answer_agreement
from procrl.traces import parse_trace

BUCKETS = (0, 4, 8, 16, 32, 64)


def random_policy(rng: np.random.Generator, scale: float = 1.0) -> ToyPolicy:
    return ToyPolicy(scale * rng.normal(size=len(BUCKETS)), scale * rng.normal(size=len(CATEGORIES)),
                     scale * rng.normal(size=4), float(rng.uniform(0.2, 2.0)), BUCKETS)


def random_group(rng: np.random.Generator, policy: ToyPolicy, reference: ToyPolicy, instance, k: int = 8
                 ) -> RolloutGroup:
    samples = sample_group(policy, instance, k, 64, rng, NoiseModel())
    return build_group(policy, reference, instance, samples, RewardWeights(), default_taxonomy())


def with_totals_shifted(group: RolloutGroup, c: float) -> RolloutGroup:
    return replace(group, advantages=compute_advantages(group.totals + c))


def finite_difference(f, theta: np.ndarray, h: float = 1e-5) -> np.ndarray:
    out = np.empty_like(theta)
    for i in range(len(theta)):
        e = np.zeros_like(theta)
        e[i] = h
        out[i] = (f(theta + e) - f(theta - e)) / (2 * h)
    return out


def gradient_oracle_error(rng: np.random.Generator, instance, kl_beta: float) -> tuple[float, float]:
    """Relative errors (policy-gradient part, KL part) of analytic vs central-difference gradients."""
    policy, reference = random_policy(rng), random_policy(rng)
    group = random_group(rng, policy, reference, instance)

    def rel(a, b):
        return float(np.max(np.abs(a - b)) / max(1e-8, np.max(np.abs(b))))

    theta = policy.params
    pg = example_grad(policy, reference, group, instance, 0.0)
    pg_fd = finite_difference(lambda t: example_loss(policy.with_params(t), reference, group, instance, 0.0), theta)
    full = example_grad(policy, reference, group, instance, kl_beta)
    kl = (full - pg) / kl_beta
    full_fd = finite_difference(
        lambda t: example_loss(policy.with_params(t), reference, group, instance, kl_beta), theta)
    kl_fd = (full_fd - pg_fd) / kl_beta
    return rel(pg, pg_fd), rel(kl, kl_fd)


# -- training experiments ---------------------------------------------------------

TOY_TRAIN = dict(group_size=8, learning_rate=0.1, batch_size=16, kl_beta=0.04, iterations=300, max_think_len=64)
OUTCOME_ONLY = RewardWeights(alpha_consistency=0.0, alpha_keywords=0.0, alpha_overthink=0.0)
N_TRAIN = 500
EVAL_BUDGET = 64


def evaluate(policy: ToyPolicy, dataset, seed: int, budget: int = EVAL_BUDGET) -> tuple[float, float]:
    """(accuracy, reasoning-answer agreement) from one sampled response per instance."""
    acc = agree = 0
    for i, inst in enumerate(dataset):
        s = sample_response(policy, inst, budget, NoiseModel(), np.random.default_rng([seed, 5, i]))
        t = parse_trace(s.raw)
        acc += accuracy_reward(t, inst)
        agree += reasoning_answer_agreement(t, inst)
    return acc / len(dataset), agree / len(dataset)


@lru_cache(maxsize=None)
def training_run(seed: int, outcome_only: bool = False):
    """Train from the uniform policy; returns (dataset, initial, trained, log)."""
    dataset = generate_dataset(seed, N_TRAIN)
    config = TrainConfig(seed=seed, weights=OUTCOME_ONLY if outcome_only else RewardWeights(), **TOY_TRAIN)
    init = ToyPolicy.uniform()
    policy, log = train(dataset, init, init, config)
    return dataset, init, policy, log
