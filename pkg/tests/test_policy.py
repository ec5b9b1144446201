import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from procrl.policy import (CATEGORIES, NO_NOISE, NoiseModel, Sample, TokenPools, ToyPolicy, categorical_kl,
                           grad_log_prob, kl_divergence, log_prob, sample_response)
from procrl.rewards import accuracy_reward
from procrl.traces import parse_trace

from conftest import make_instance

TINY_POOLS = TokenPools(("first", "second"), ("thus", "hence"), ("pitch", "tone"), ("hmm", "okay"))


def tiny_instance():
    # every pool holds exactly two words
    return make_instance(caption=("cap1", "cap2"), texts=("g", "d1", "d2", "d12"),
                         concepts=(("g1", "g2"), ("d1",), ("d2",), ("d1", "d2")), gold=0)


def random_policy(rng, buckets=(0, 4, 8, 16, 32, 64), temperature=0.3):
    return ToyPolicy(rng.normal(size=len(buckets)), rng.normal(size=len(CATEGORIES)), rng.normal(size=4),
                     temperature, buckets)


def test_enumerated_probabilities_sum_to_one():
    inst = tiny_instance()
    pools = TINY_POOLS.for_instance(inst)
    sizes = np.array([len(p) for p in pools])
    assert set(sizes) == {2}
    policy = random_policy(np.random.default_rng(3), buckets=(0, 4), temperature=0.7)
    total = 0.0
    for b, n in enumerate(policy.length_buckets):
        for cats in itertools.product(range(len(CATEGORIES)), repeat=n):
            cats = np.array(cats, dtype=int)
            for toks in itertools.product(range(2), repeat=n):
                words = tuple(pools[c][t] for c, t in zip(cats, toks))
                ov = np.array(inst.overlaps(set(inst.caption).union(words)))
                for ans in range(4):
                    s = Sample("", words, b, cats, sizes[cats], ov, ans)
                    total += math.exp(log_prob(policy, s))
    assert abs(total - 1.0) < 1e-9


def test_reported_logp_matches_empirical_frequency():
    # bucket x answer marginals from the sampler agree with exp(logp) summed over the enumeration
    inst = tiny_instance()
    policy = ToyPolicy(np.array([0.3, -0.2]), np.zeros(7), np.array([0.5, 0, 0, -0.5]), 1.0, (0, 4))
    rng = np.random.default_rng(0)
    n = 20000
    zero = sum(sample_response(policy, inst, 4, NO_NOISE, rng, TINY_POOLS).bucket == 0 for _ in range(n))
    p0 = math.exp(0.3) / (math.exp(0.3) + math.exp(-0.2))
    assert abs(zero / n - p0) < 4 * math.sqrt(p0 * (1 - p0) / n)


def test_sample_logp_equals_log_prob(speaker):
    policy = random_policy(np.random.default_rng(1))
    for seed in range(20):
        s = sample_response(policy, speaker, 64, NoiseModel(), np.random.default_rng(seed))
        assert s.logp == log_prob(policy, s)
        assert parse_trace(s.raw).format_valid


def test_zero_budget(speaker):
    s = sample_response(ToyPolicy.uniform(), speaker, 0, NoiseModel(), np.random.default_rng(0))
    t = parse_trace(s.raw)
    assert t.think == "" and t.format_valid and s.think_len == 0


@given(st.integers(0, 80), st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_budget_compliance(budget, seed):
    inst = make_instance()
    s = sample_response(ToyPolicy.uniform(), inst, budget, NoiseModel(0.2, 0.05), np.random.default_rng(seed))
    assert s.think_len <= budget
    assert len(parse_trace(s.raw).think.split()) == s.think_len


def test_certain_corruption(small_dataset):
    noise = NoiseModel(1.0, 0.0)
    for i, inst in enumerate(small_dataset[:10]):
        s = sample_response(ToyPolicy.uniform(), inst, 64, noise, np.random.default_rng(i))
        distractors = set(TokenPools().for_instance(inst)[2])
        assert all(w in distractors for w in s.think_words)


def test_caption_only_policy_answers_gold_by_argmax(small_dataset):
    emission = np.full(7, -1e3)
    emission[0] = 0.0
    policy = ToyPolicy(np.zeros(6), emission, np.zeros(4))
    for i, inst in enumerate(small_dataset):
        s = sample_response(policy, inst, 64, NO_NOISE, np.random.default_rng(i))
        # brute force: overlap of emitted words plus caption with each choice
        pool = set(inst.caption) | set(s.think_words)
        ov = [len(pool & set(c.concepts)) for c in inst.choices]
        assert int(np.argmax(policy.answer_logits(ov))) == inst.gold_index
        assert all(w in inst.caption for w in s.think_words)


def test_noise_probabilities():
    p = NoiseModel(0.05, 0.01).probabilities(200)
    assert p[0] == 0.05 and p[10] == pytest.approx(0.15) and p[-1] == 1.0
    with pytest.raises(ValueError):
        NoiseModel(1.5, 0.0)
    with pytest.raises(ValueError):
        NoiseModel(0.1, -1.0)


def test_sampling_is_deterministic(speaker):
    policy = random_policy(np.random.default_rng(5))
    a = sample_response(policy, speaker, 64, NoiseModel(), np.random.default_rng(9))
    b = sample_response(policy, speaker, 64, NoiseModel(), np.random.default_rng(9))
    assert a.raw == b.raw and a.logp == b.logp


def test_grad_log_prob_finite_differences(speaker):
    rng = np.random.default_rng(2)
    for _ in range(10):
        policy = random_policy(rng)
        s = sample_response(policy, speaker, 64, NoiseModel(), rng)
        g = grad_log_prob(policy, s)
        theta, h = policy.params, 1e-5
        fd = np.array([(log_prob(policy.with_params(theta + h * e), s) - log_prob(policy.with_params(theta - h * e), s))
                       / (2 * h) for e in np.eye(len(theta))])
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-7)


def test_kl_closed_form():
    p, q = np.log([0.75, 0.25]), np.log([0.5, 0.5])
    expected = 0.75 * math.log(1.5) + 0.25 * math.log(0.5)
    assert categorical_kl(p, q) == pytest.approx(expected, abs=1e-15)
    assert round(expected, 4) == 0.1308


def test_kl_identity_and_gibbs(speaker):
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, b = random_policy(rng), random_policy(rng)
        assert kl_divergence(a, b, speaker) >= 0.0
    assert kl_divergence(a, a, speaker) == 0.0


def test_kl_rejects_mismatched_support(speaker):
    with pytest.raises(ValueError):
        kl_divergence(ToyPolicy.uniform(), ToyPolicy.uniform(length_buckets=(0, 4)), speaker)


def test_policy_validation_and_round_trip():
    p = random_policy(np.random.default_rng(0))
    assert ToyPolicy.from_dict(p.to_dict()) == p
    with pytest.raises(ValueError):
        ToyPolicy(np.zeros(6), np.array([np.nan] * 7), np.zeros(4))
    with pytest.raises(ValueError):
        ToyPolicy(np.zeros(6), np.zeros(7), np.zeros(4), answer_temperature=0.0)
    with pytest.raises(ValueError):
        ToyPolicy(np.zeros(5), np.zeros(7), np.zeros(4))
    with pytest.raises(ValueError):
        p.length_logits[0] = 1.0  # read-only snapshot


def test_uniform_policy_accuracy_decreases_with_budget(small_dataset):
    # short Monte Carlo version of the inverse-scaling property
    noise = NoiseModel(0.05, 0.01)
    policy = ToyPolicy.uniform()
    accs = []
    for budget in (0, 64):
        hits = [accuracy_reward(parse_trace(sample_response(policy, inst, budget, noise,
                                                            np.random.default_rng([7, r, i])).raw), inst)
                for r in range(10) for i, inst in enumerate(small_dataset)]
        accs.append(np.mean(hits))
    assert accs[1] < accs[0]
