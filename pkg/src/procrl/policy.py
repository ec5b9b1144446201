"""Factorized categorical toy policy that writes ``<think>``/``<answer>`` traces.

A response is generated by three heads:

* a length head picks a word-count bucket (truncated to the think budget),
* an emission head picks a category for every think word, and the word itself
  is drawn uniformly from that category's instance-specific pool,
* an answer head picks a choice with logits
  ``overlap(evidence, choice) / temperature + bias`` where the evidence is the
  caption plus the concepts actually written in the think text.

Only the length logits, emission logits and answer bias are trainable. All
log-probabilities and their gradients are exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .traces import N_CHOICES, ParsedTrace, QAInstance, render_trace

LENGTH_BUCKETS = (0, 4, 8, 16, 32, 64)
CATEGORIES = ("caption", "gold", "distractor", "pattern", "logic", "domain", "noise")
N_CATEGORIES = len(CATEGORIES)

DEFAULT_ANSWER_TEMPERATURE = 0.3

# Single-word entries of the default taxonomy. By default the toy emits one word
# per section: with wider pools the uncapped per-entry keyword reward outweighs
# accuracy and training degenerates into keyword stuffing.
PATTERN_WORDS = ("first", "second", "then", "next", "finally")
LOGIC_WORDS = ("given", "since", "therefore", "thus", "hence", "so",
               "indicates", "suggests", "assume", "suppose", "typically", "generally")
DOMAIN_WORDS = ("sound", "audio", "noise", "pitch", "volume", "timbre", "rhythm", "frequency",
                "bell", "ring", "hooves", "engine", "siren", "animal", "moo",
                "chord", "note", "melody", "harmony", "instrument", "major", "minor",
                "voice", "speech", "tone", "intonation", "male", "female", "shouting", "whisper")
NOISE_WORDS = ("hmm", "okay", "well", "maybe", "perhaps", "like", "actually", "basically")


def log_softmax(z: np.ndarray) -> np.ndarray:
    m = np.max(z)
    s = z - m
    return s - np.log(np.sum(np.exp(s)))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def categorical_kl(p_logits: np.ndarray, q_logits: np.ndarray) -> float:
    lp, lq = log_softmax(p_logits), log_softmax(q_logits)
    return float(np.sum(np.exp(lp) * (lp - lq)))


def categorical_kl_grad(p_logits: np.ndarray, q_logits: np.ndarray) -> np.ndarray:
    """Gradient of ``KL(softmax(p) || softmax(q))`` with respect to ``p``."""
    lp, lq = log_softmax(p_logits), log_softmax(q_logits)
    p = np.exp(lp)
    d = lp - lq
    return p * (d - np.sum(p * d))


def draw_categorical(rng: np.random.Generator, p: np.ndarray, size: int | None = None):
    cdf = np.cumsum(p)
    u = rng.random(size) * cdf[-1]
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, len(p) - 1)


@dataclass(frozen=True)
class TokenPools:
    """Instance-independent word pools for the keyword and noise categories."""

    pattern: tuple[str, ...] = ("first",)
    logic: tuple[str, ...] = ("therefore",)
    domain: tuple[str, ...] = ("pitch",)
    noise: tuple[str, ...] = NOISE_WORDS

    @classmethod
    def full(cls) -> "TokenPools":
        """Every single-word keyword of the default taxonomy."""
        return cls(PATTERN_WORDS, LOGIC_WORDS, DOMAIN_WORDS, NOISE_WORDS)

    def __post_init__(self):
        for name in ("pattern", "logic", "domain", "noise"):
            if not getattr(self, name):
                raise ValueError(f"token pool {name!r} is empty")

    def for_instance(self, instance: QAInstance) -> tuple[tuple[str, ...], ...]:
        """Pools in :data:`CATEGORIES` order."""
        gold = instance.gold_index
        distractor = tuple(dict.fromkeys(
            w for i, c in enumerate(instance.choices) if i != gold for w in c.concepts))
        return (instance.caption, instance.gold.concepts, distractor,
                self.pattern, self.logic, self.domain, self.noise)


@dataclass(frozen=True)
class NoiseModel:
    """Position-dependent corruption of think words into distractor concepts."""

    base_corruption: float = 0.05
    growth: float = 0.01

    def __post_init__(self):
        if not (0.0 <= self.base_corruption <= 1.0):
            raise ValueError(f"base_corruption must lie in [0, 1], got {self.base_corruption}")
        if not (self.growth >= 0.0 and np.isfinite(self.growth)):
            raise ValueError(f"growth must be finite and >= 0, got {self.growth}")

    def probabilities(self, n: int) -> np.ndarray:
        return np.minimum(1.0, self.base_corruption + self.growth * np.arange(n))


NO_NOISE = NoiseModel(0.0, 0.0)


@dataclass(frozen=True, eq=False)
class ToyPolicy:
    length_logits: np.ndarray
    emission_logits: np.ndarray
    answer_bias: np.ndarray
    answer_temperature: float = DEFAULT_ANSWER_TEMPERATURE
    length_buckets: tuple[int, ...] = LENGTH_BUCKETS

    def __post_init__(self):
        for name in ("length_logits", "emission_logits", "answer_bias"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "length_buckets", tuple(int(b) for b in self.length_buckets))
        if self.length_logits.shape != (len(self.length_buckets),):
            raise ValueError("length_logits must have one entry per length bucket")
        if any(b < 0 for b in self.length_buckets) or len(set(self.length_buckets)) != len(self.length_buckets):
            raise ValueError("length buckets must be distinct non-negative integers")
        if self.emission_logits.shape != (N_CATEGORIES,):
            raise ValueError(f"emission_logits must have {N_CATEGORIES} entries")
        if self.answer_bias.shape != (N_CHOICES,):
            raise ValueError(f"answer_bias must have {N_CHOICES} entries")
        if not all(np.all(np.isfinite(a)) for a in (self.length_logits, self.emission_logits, self.answer_bias)):
            raise ValueError("policy logits must be finite")
        if not (self.answer_temperature > 0 and np.isfinite(self.answer_temperature)):
            raise ValueError("answer_temperature must be positive and finite")

    @classmethod
    def uniform(cls, answer_temperature: float = DEFAULT_ANSWER_TEMPERATURE, length_buckets: Sequence[int] = LENGTH_BUCKETS) -> "ToyPolicy":
        return cls(np.zeros(len(length_buckets)), np.zeros(N_CATEGORIES), np.zeros(N_CHOICES),
                   answer_temperature, tuple(length_buckets))

    # flat parameter vector: [length | emission | answer bias]
    @property
    def n_params(self) -> int:
        return len(self.length_buckets) + N_CATEGORIES + N_CHOICES

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.length_logits, self.emission_logits, self.answer_bias])

    def with_params(self, theta: np.ndarray) -> "ToyPolicy":
        theta = np.asarray(theta, dtype=float)
        if theta.shape != (self.n_params,):
            raise ValueError(f"expected {self.n_params} parameters, got shape {theta.shape}")
        nl = len(self.length_buckets)
        return ToyPolicy(theta[:nl], theta[nl:nl + N_CATEGORIES], theta[nl + N_CATEGORIES:],
                         self.answer_temperature, self.length_buckets)

    def same_support(self, other: "ToyPolicy") -> bool:
        return self.length_buckets == other.length_buckets

    def answer_logits(self, overlaps: Sequence[int] | np.ndarray) -> np.ndarray:
        return np.asarray(overlaps, dtype=float) / self.answer_temperature + self.answer_bias

    def to_dict(self) -> dict[str, Any]:
        return {
            "length_buckets": list(self.length_buckets),
            "length_logits": self.length_logits.tolist(),
            "emission_categories": list(CATEGORIES),
            "emission_logits": self.emission_logits.tolist(),
            "answer_bias": self.answer_bias.tolist(),
            "answer_temperature": float(self.answer_temperature),
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "ToyPolicy":
        cats = d.get("emission_categories")
        if cats is not None and tuple(cats) != CATEGORIES:
            raise ValueError(f"emission_categories must be {list(CATEGORIES)}")
        buckets = tuple(d.get("length_buckets", LENGTH_BUCKETS))
        return cls(
            np.asarray(d.get("length_logits", np.zeros(len(buckets))), dtype=float),
            np.asarray(d.get("emission_logits", np.zeros(N_CATEGORIES)), dtype=float),
            np.asarray(d.get("answer_bias", np.zeros(N_CHOICES)), dtype=float),
            float(d.get("answer_temperature", DEFAULT_ANSWER_TEMPERATURE)),
            buckets,
        )

    def __eq__(self, other):
        if not isinstance(other, ToyPolicy):
            return NotImplemented
        return (self.length_buckets == other.length_buckets
                and self.answer_temperature == other.answer_temperature
                and np.array_equal(self.params, other.params))

    def __repr__(self):
        return (f"ToyPolicy(buckets={self.length_buckets}, T={self.answer_temperature}, "
                f"params={np.array2string(self.params, precision=3)})")


@dataclass(frozen=True, eq=False)
class Sample:
    """One sampled response plus every decision needed to re-score it."""

    raw: str
    think_words: tuple[str, ...]
    bucket: int
    categories: np.ndarray
    pool_sizes: np.ndarray
    overlaps: np.ndarray
    answer: int
    logp: float = field(default=0.0)

    @property
    def think_len(self) -> int:
        return len(self.think_words)


def sample_response(policy: ToyPolicy, instance: QAInstance, max_think_len: int,
                    noise: NoiseModel = NO_NOISE, rng: np.random.Generator | None = None,
                    pools: TokenPools | None = None) -> Sample:
    if max_think_len < 0:
        raise ValueError("max_think_len must be >= 0")
    rng = rng if rng is not None else np.random.default_rng()
    word_pools = (pools or TokenPools()).for_instance(instance)
    sizes = np.array([len(p) for p in word_pools])

    p_len = softmax(policy.length_logits)
    bucket = int(draw_categorical(rng, p_len))
    n = min(policy.length_buckets[bucket], max_think_len)

    if n:
        cats = draw_categorical(rng, softmax(policy.emission_logits), n)
        tok = (rng.random(n) * sizes[cats]).astype(int)
        corrupt = rng.random(n) < noise.probabilities(n)
        distractor = word_pools[2]
        repl = rng.integers(len(distractor), size=n)
        words = tuple(distractor[repl[j]] if corrupt[j] else word_pools[cats[j]][tok[j]] for j in range(n))
    else:
        cats = np.zeros(0, dtype=int)
        words = ()

    overlaps = np.array(instance.overlaps(set(instance.caption).union(words)))
    answer = int(draw_categorical(rng, softmax(policy.answer_logits(overlaps))))

    raw = render_trace(ParsedTrace(think=" ".join(words), answer=instance.choices[answer].text))
    sample = Sample(raw, words, bucket, cats, sizes[cats], overlaps, answer)
    object.__setattr__(sample, "logp", log_prob(policy, sample))
    return sample


def log_prob(policy: ToyPolicy, sample: Sample) -> float:
    """Exact log-probability of every categorical decision behind ``sample``."""
    lp = log_softmax(policy.length_logits)[sample.bucket]
    if len(sample.categories):
        lp += np.sum(log_softmax(policy.emission_logits)[sample.categories])
        lp -= np.sum(np.log(sample.pool_sizes))
    lp += log_softmax(policy.answer_logits(sample.overlaps))[sample.answer]
    return float(lp)


def grad_log_prob(policy: ToyPolicy, sample: Sample) -> np.ndarray:
    """Gradient of :func:`log_prob` with respect to ``policy.params``."""
    nl = len(policy.length_buckets)
    g = np.zeros(policy.n_params)
    g[:nl] = -softmax(policy.length_logits)
    g[sample.bucket] += 1.0
    n = len(sample.categories)
    if n:
        ge = -n * softmax(policy.emission_logits)
        ge += np.bincount(sample.categories, minlength=N_CATEGORIES)
        g[nl:nl + N_CATEGORIES] = ge
    ga = -softmax(policy.answer_logits(sample.overlaps))
    ga[sample.answer] += 1.0
    g[nl + N_CATEGORIES:] = ga
    return g


def caption_overlaps(instance: QAInstance) -> np.ndarray:
    return np.array(instance.overlaps())


def kl_divergence(policy: ToyPolicy, reference: ToyPolicy, instance: QAInstance) -> float:
    """Exact KL summed over the three heads; the answer head is taken at the caption-only context."""
    _check_support(policy, reference)
    ov = caption_overlaps(instance)
    return (categorical_kl(policy.length_logits, reference.length_logits)
            + categorical_kl(policy.emission_logits, reference.emission_logits)
            + categorical_kl(policy.answer_logits(ov), reference.answer_logits(ov)))


def grad_kl_divergence(policy: ToyPolicy, reference: ToyPolicy, instance: QAInstance) -> np.ndarray:
    _check_support(policy, reference)
    ov = caption_overlaps(instance)
    return np.concatenate([
        categorical_kl_grad(policy.length_logits, reference.length_logits),
        categorical_kl_grad(policy.emission_logits, reference.emission_logits),
        categorical_kl_grad(policy.answer_logits(ov), reference.answer_logits(ov)),
    ])


def _check_support(policy: ToyPolicy, reference: ToyPolicy) -> None:
    if not policy.same_support(reference):
        raise ValueError(f"policies have different length supports: "
                         f"{policy.length_buckets} vs {reference.length_buckets}")
