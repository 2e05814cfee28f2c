"""Bradley-Terry and tie-aware Bradley-Terry (TOBT) probabilities.

The TOBT model widens the BT integral by a buffer ``alpha`` so that a pair of
competitors has three outcomes: first preferred, second preferred, or tied.
With log-strength difference ``d`` and ``phi = exp(alpha)``::

    prefer    = sigmoid(d - alpha)
    disprefer = sigmoid(-d - alpha)
    tie       = (exp(2 alpha) - 1) / ((1 + exp(d + alpha)) (1 + exp(-d + alpha)))

All reward-space arithmetic below works on ``d`` directly so that large
rewards never get exponentiated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from . import kernels
from .errors import DomainError, QuadratureError

STRENGTH_MIN = 1e-300
STRENGTH_MAX = 1e300

QUAD_TOL = 1e-10
QUAD_CUTOFF = 60.0
ORACLE_MAX_ABS_D = 50.0


@dataclass(frozen=True)
class Strength:
    """Positive competitor strength ``lambda``."""

    value: float

    def __post_init__(self):
        v = float(self.value)
        if not (STRENGTH_MIN <= v <= STRENGTH_MAX):
            raise DomainError(f"strength must lie in [{STRENGTH_MIN:g}, {STRENGTH_MAX:g}], got {self.value!r}")
        object.__setattr__(self, "value", v)


@dataclass(frozen=True)
class TieParam:
    """Tie buffer ``alpha >= 0`` and its multiplicative form ``phi = exp(alpha)``.

    ``alpha == 0`` is the degenerate no-tie model and reduces TOBT to BT.
    """

    alpha: float
    phi: float = field(init=False)

    def __post_init__(self):
        a = float(self.alpha)
        if not math.isfinite(a) or a < 0.0:
            raise DomainError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "phi", math.exp(a))


@dataclass(frozen=True)
class RankProbabilities:
    prefer: float
    disprefer: float
    tie: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.prefer, self.disprefer, self.tie)


StrengthLike = Union[Strength, float]
TieLike = Union[TieParam, float]


def as_tie_param(tp: TieLike) -> TieParam:
    return tp if isinstance(tp, TieParam) else TieParam(tp)


def _as_strength(s: StrengthLike) -> Strength:
    return s if isinstance(s, Strength) else Strength(s)


def sigmoid(x):
    """Numerically stable logistic function; scalar or array."""
    x = np.asarray(x, dtype=np.float64)
    z = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + z), z / (1.0 + z))
    return out[()] if out.ndim == 0 else out


def softplus(x):
    """``log(1 + exp(x))`` without overflow."""
    out = np.logaddexp(0.0, np.asarray(x, dtype=np.float64))
    return out[()] if out.ndim == 0 else out


def log_expm1_2alpha(alpha: float) -> float:
    """``log(exp(2 alpha) - 1)``; ``-inf`` at ``alpha == 0``."""
    if alpha == 0.0:
        return -math.inf
    two = 2.0 * alpha
    if two > 30.0:
        return two + math.log1p(-math.exp(-two))
    return math.log(math.expm1(two))


def _log_expm1_2alpha_array(alpha: np.ndarray) -> np.ndarray:
    two = 2.0 * alpha
    with np.errstate(divide="ignore", over="ignore"):
        small = np.log(np.expm1(np.minimum(two, 30.0)))
        large = two + np.log1p(-np.exp(-two))
    return np.where(two > 30.0, large, small)


def rank_probabilities(d, alpha) -> np.ndarray:
    """Vectorised TOBT triple for log-strength differences ``d``.

    ``alpha`` may be a scalar or an array broadcastable against ``d``.
    Returns an array of shape ``broadcast(d, alpha).shape + (3,)`` ordered
    (prefer, disprefer, tie).
    """
    d = np.asarray(d, dtype=np.float64)
    a = np.asarray(alpha, dtype=np.float64)
    prefer = sigmoid(d - a)
    disprefer = sigmoid(-d - a)
    # log(e^{2a} - 1) is -inf at a == 0, which makes the tie term exactly 0
    lead = log_expm1_2alpha(float(a)) if a.ndim == 0 else _log_expm1_2alpha_array(a)
    # softplus terms are summed in a swap-symmetric order so tie(d) == tie(-d)
    tie = np.exp(lead - (softplus(d + a) + softplus(-d + a)))
    return np.stack(np.broadcast_arrays(prefer, disprefer, tie), axis=-1)


def bt_prob(s1: StrengthLike, s2: StrengthLike) -> float:
    """BT probability that the first competitor ranks above the second."""
    l1 = _as_strength(s1).value
    l2 = _as_strength(s2).value
    return float(sigmoid(math.log(l1) - math.log(l2)))


def tobt_probs_from_rewards(r1: float, r2: float, tp: TieLike) -> RankProbabilities:
    """TOBT probabilities with strengths ``exp(r1)`` and ``exp(r2)``."""
    if not (math.isfinite(r1) and math.isfinite(r2)):
        raise DomainError("rewards must be finite")
    p = rank_probabilities(float(r1) - float(r2), as_tie_param(tp).alpha)
    return RankProbabilities(float(p[0]), float(p[1]), float(p[2]))


def tobt_probs(s1: StrengthLike, s2: StrengthLike, tp: TieLike) -> RankProbabilities:
    l1 = _as_strength(s1).value
    l2 = _as_strength(s2).value
    return tobt_probs_from_rewards(math.log(l1), math.log(l2), tp)


def _integrate(lo: float, hi: float) -> float:
    """(1/2) int sech^2(t) dt over [lo, hi]; hi may be +inf.

    Only the pieces beyond |t| = 60 use the tanh antiderivative.
    """
    if hi <= lo:
        return 0.0
    tail = 0.0
    if hi > QUAD_CUTOFF:
        tail += 0.5 * (1.0 - math.tanh(max(lo, QUAD_CUTOFF)))
        hi = QUAD_CUTOFF
    if lo < -QUAD_CUTOFF:
        tail += 0.5 * (math.tanh(min(hi, -QUAD_CUTOFF)) + 1.0)
        lo = -QUAD_CUTOFF
    if hi <= lo:
        return tail
    value, ok = kernels.simpson_half_sech2(lo, hi, QUAD_TOL)
    if not ok:
        raise QuadratureError(f"adaptive Simpson did not reach tolerance {QUAD_TOL:g} on [{lo}, {hi}]")
    return float(value) + tail


def quadrature_oracle(d: float, tp: TieLike) -> RankProbabilities:
    """TOBT probabilities by numerically integrating the sech^2 definitions.

    With ``t = y / 2`` the integrand ``(1/4) sech^2(y/2) dy`` becomes
    ``(1/2) sech^2(t) dt``. Intervals are::

        prefer     [(-d + alpha)/2, inf)
        tie        [(-d - alpha)/2, (-d + alpha)/2]
        disprefer  [( d + alpha)/2, inf)

    Independent of the closed forms apart from the sub-1e-50 tail beyond
    |t| = 60. For ``|d| > 50`` saturated values are returned.
    """
    d = float(d)
    if not math.isfinite(d):
        raise DomainError("log-strength difference must be finite")
    alpha = as_tie_param(tp).alpha
    if d > ORACLE_MAX_ABS_D:
        return RankProbabilities(1.0, 0.0, 0.0)
    if d < -ORACLE_MAX_ABS_D:
        return RankProbabilities(0.0, 1.0, 0.0)
    prefer = _integrate(0.5 * (-d + alpha), math.inf)
    disprefer = _integrate(0.5 * (d + alpha), math.inf)
    tie = _integrate(0.5 * (-d - alpha), 0.5 * (-d + alpha))
    return RankProbabilities(prefer, disprefer, tie)
