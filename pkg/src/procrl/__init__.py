"""Process rewards for tagged reasoning traces and a small GRPO laboratory."""

__version__ = "0.1.0"

from .estimators import GRPOTrainer, RewardScorer
from .grpo import TrainConfig, TrainLog, compute_advantages, kl_term, policy_gradient_loss, sample_group, train
from .judge import (ComparisonRecord, Verdict, WinRateReport, aggregate_win_rate, build_judge_prompt, mock_judge,
                    parse_verdict)
from .policy import NoiseModel, TokenPools, ToyPolicy, sample_response
from .rewards import (KeywordTaxonomy, RewardBreakdown, RewardWeights, accuracy_reward, consistency_reward,
                      default_taxonomy, format_reward, keyword_reward, overthinking_penalty, total_reward)
from .scaling import ScalingCurve, emit_curve, sweep, sweet_spot
from .synthetic import TemplateSet, augment, generate_dataset, reasoning_answer_agreement
from .text import concept_set, semantic_similarity
from .traces import ParsedTrace, QAInstance, parse_trace, render_trace, think_length
