"""scikit-learn style wrappers around the reward suite and the GRPO trainer."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .grpo import TrainConfig, TrainLog, train
from .policy import NoiseModel, TokenPools, ToyPolicy, sample_response
from .rewards import KeywordTaxonomy, RewardWeights, default_taxonomy, resolve_answer, total_reward
from .traces import parse_trace
from .validation import check_instances, check_trace_pairs

BREAKDOWN_FIELDS = ("acc", "format", "consistency", "pattern", "logic", "domain", "overthink", "total")


class RewardScorer(TransformerMixin, BaseEstimator):
    """Score ``(raw_trace, instance)`` pairs into reward-breakdown rows.

    ``fit`` only validates the hyperparameters; the scorer has no learned state.
    """

    def __init__(self, alpha_acc=5.0, alpha_format=1.0, alpha_consistency=1.0, alpha_keywords=1.0,
                 alpha_overthink=1.0, l_max_output=256, taxonomy=None):
        self.alpha_acc = alpha_acc
        self.alpha_format = alpha_format
        self.alpha_consistency = alpha_consistency
        self.alpha_keywords = alpha_keywords
        self.alpha_overthink = alpha_overthink
        self.l_max_output = l_max_output
        self.taxonomy = taxonomy

    def fit(self, X=None, y=None):
        self.weights_ = RewardWeights(self.alpha_acc, self.alpha_format, self.alpha_consistency,
                                      self.alpha_keywords, self.alpha_overthink, self.l_max_output)
        tax = self.taxonomy
        if tax is None:
            tax = default_taxonomy()
        elif not isinstance(tax, KeywordTaxonomy):
            tax = KeywordTaxonomy.from_dict(tax)
        self.taxonomy_ = tax
        self.n_features_out_ = len(BREAKDOWN_FIELDS)
        return self

    def transform(self, X):
        check_is_fitted(self, "weights_")
        pairs = check_trace_pairs(X)
        out = np.empty((len(pairs), len(BREAKDOWN_FIELDS)))
        for i, (raw, inst) in enumerate(pairs):
            b = total_reward(raw, inst, self.weights_, self.taxonomy_)
            out[i] = [getattr(b, f) for f in BREAKDOWN_FIELDS]
        return out

    def get_feature_names_out(self, input_features=None):
        return np.asarray(BREAKDOWN_FIELDS, dtype=object)


class GRPOTrainer(BaseEstimator):
    """Fit a :class:`ToyPolicy` on QA instances with group-relative policy optimization.

    Parameters mirror :class:`~procrl.grpo.TrainConfig`, flattened so that
    ``get_params``/``set_params`` and grid searches work. After ``fit`` the
    trained policy is in ``policy_`` and the per-iteration log in ``log_``.
    """

    def __init__(self, group_size=8, learning_rate=1e-5, batch_size=32, kl_beta=0.04, n_iterations=100,
                 max_think_len=64, alpha_acc=5.0, alpha_format=1.0, alpha_consistency=1.0,
                 alpha_keywords=1.0, alpha_overthink=1.0, l_max_output=256, base_corruption=0.05,
                 noise_growth=0.01, answer_temperature=0.3, init_policy=None, pools=None, random_state=0):
        self.group_size = group_size
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.kl_beta = kl_beta
        self.n_iterations = n_iterations
        self.max_think_len = max_think_len
        self.alpha_acc = alpha_acc
        self.alpha_format = alpha_format
        self.alpha_consistency = alpha_consistency
        self.alpha_keywords = alpha_keywords
        self.alpha_overthink = alpha_overthink
        self.l_max_output = l_max_output
        self.base_corruption = base_corruption
        self.noise_growth = noise_growth
        self.answer_temperature = answer_temperature
        self.init_policy = init_policy
        self.pools = pools
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        weights = RewardWeights(self.alpha_acc, self.alpha_format, self.alpha_consistency,
                                self.alpha_keywords, self.alpha_overthink, self.l_max_output)
        return TrainConfig(
            group_size=self.group_size, learning_rate=self.learning_rate, batch_size=self.batch_size,
            kl_beta=self.kl_beta, iterations=self.n_iterations, seed=int(self.random_state or 0),
            max_think_len=self.max_think_len, weights=weights,
            noise=NoiseModel(self.base_corruption, self.noise_growth),
        )

    def fit(self, X, y=None):
        instances = check_instances(X)
        config = self._config()
        init = self.init_policy if self.init_policy is not None else ToyPolicy.uniform(self.answer_temperature)
        self.reference_policy_ = init
        self.config_ = config
        self.policy_, self.log_ = train(instances, init, init, config, pools=self.pools)
        self.n_iter_ = len(self.log_)
        return self

    @property
    def train_log(self) -> TrainLog:
        check_is_fitted(self, "policy_")
        return self.log_

    def sample(self, X, max_think_len=None, seed=None) -> list[str]:
        """One raw trace per instance; instance ``i`` uses stream ``[seed, 3, i]``."""
        check_is_fitted(self, "policy_")
        instances = check_instances(X)
        budget = self.max_think_len if max_think_len is None else max_think_len
        seed = int(self.random_state or 0) if seed is None else seed
        noise = self.config_.noise
        pools = self.pools or TokenPools()
        return [sample_response(self.policy_, inst, budget, noise, np.random.default_rng([seed, 3, i]), pools).raw
                for i, inst in enumerate(instances)]

    def predict(self, X, max_think_len=None, seed=None):
        """Index of the answered choice per instance (-1 when unresolvable)."""
        instances = check_instances(X)
        raws = self.sample(instances, max_think_len, seed)
        out = []
        for raw, inst in zip(raws, instances):
            idx = resolve_answer(parse_trace(raw).answer, inst)
            out.append(-1 if idx is None else idx)
        return np.asarray(out, dtype=int)

    def score(self, X, y=None, max_think_len=None, seed=None):
        instances = check_instances(X)
        gold = np.asarray([inst.gold_index for inst in instances]) if y is None else np.asarray(y)
        return float(np.mean(self.predict(instances, max_think_len, seed) == gold))
