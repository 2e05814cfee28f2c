"""Tie-aware Bradley-Terry preference modelling and TODO / DPO training on
tabular policies."""

from .errors import (ConfigError, DataError, DivergenceError, DomainError, QuadratureError,
                     TierankError)
from .tobt import (RankProbabilities, Strength, TieParam, bt_prob, quadrature_oracle,
                   rank_probabilities, tobt_probs, tobt_probs_from_rewards)
from .losses import LossGrad, dpo_loss, g_weight, todo_loss, todo_pref_loss, todo_tie_loss

__version__ = "0.1.0"
