"""DPO and TODO per-pair losses with exact derivatives in the margin ``mu``.

``mu`` is the implicit reward margin
``beta * (log pi(y1)/pi_ref(y1) - log pi(y2)/pi_ref(y2))``. Each function
accepts a scalar or an array of margins and returns a :class:`LossGrad` of the
same shape. Chain-rule propagation to policy parameters lives in
:mod:`tierank.policy`.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import DomainError
from .tobt import TieLike, as_tie_param, log_expm1_2alpha, sigmoid, softplus


class LossGrad(NamedTuple):
    loss: float | np.ndarray
    dloss_dmu: float | np.ndarray


def dpo_loss(mu) -> LossGrad:
    """``-log sigmoid(mu)``."""
    return LossGrad(softplus(-np.asarray(mu, dtype=np.float64)), -sigmoid(-np.asarray(mu, dtype=np.float64)))


def todo_pref_loss(mu, tp: TieLike) -> LossGrad:
    """``-log sigmoid(mu - alpha)``; identical to :func:`dpo_loss` at alpha 0."""
    alpha = as_tie_param(tp).alpha
    shifted = alpha - np.asarray(mu, dtype=np.float64)
    return LossGrad(softplus(shifted), -sigmoid(shifted))


def todo_tie_loss(mu, tp: TieLike) -> LossGrad:
    """Negative log TOBT tie probability as a function of the margin.

    ``-log(exp(2a) - 1) + softplus(mu + a) + softplus(-mu + a)``. Even in
    ``mu``; its derivative ``sigmoid(mu + a) - sigmoid(-mu + a)`` vanishes at
    ``mu = 0``. Undefined for ``alpha = 0``.
    """
    alpha = as_tie_param(tp).alpha
    if alpha == 0.0:
        raise DomainError("tie loss requires alpha > 0")
    mu = np.asarray(mu, dtype=np.float64)
    loss = -log_expm1_2alpha(alpha) + (softplus(mu + alpha) + softplus(-mu + alpha))
    grad = sigmoid(mu + alpha) - sigmoid(-mu + alpha)
    return LossGrad(loss, grad)


def todo_loss(mu, is_tie, tp: TieLike) -> LossGrad:
    """Mixed objective: tie loss where ``is_tie`` holds, preference loss elsewhere."""
    is_tie_arr = np.asarray(is_tie, dtype=bool)
    mu_arr = np.asarray(mu, dtype=np.float64)
    if is_tie_arr.ndim == 0 and mu_arr.ndim == 0:
        return todo_tie_loss(mu_arr[()], tp) if bool(is_tie_arr) else todo_pref_loss(mu_arr[()], tp)
    mu_arr, is_tie_arr = np.broadcast_arrays(mu_arr, is_tie_arr)
    pref = todo_pref_loss(mu_arr, tp)
    if not is_tie_arr.any():
        return LossGrad(np.asarray(pref.loss), np.asarray(pref.dloss_dmu))
    tie = todo_tie_loss(mu_arr, tp)
    return LossGrad(
        np.where(is_tie_arr, tie.loss, pref.loss),
        np.where(is_tie_arr, tie.dloss_dmu, pref.dloss_dmu),
    )


def g_weight(mu, tp: TieLike):
    """Tie-pair gradient weight ``G(mu)``: odd, strictly decreasing, ``G(0) = 0``.

    Equals ``-d/dmu`` of :func:`todo_tie_loss`; defined (and identically
    zero) at ``alpha = 0``.
    """
    alpha = as_tie_param(tp).alpha
    mu = np.asarray(mu, dtype=np.float64)
    out = sigmoid(-mu + alpha) - sigmoid(mu + alpha)
    return out[()] if isinstance(out, np.ndarray) and out.ndim == 0 else out


def method_loss(method: str, mu, is_tie, tp: TieLike) -> LossGrad:
    """Per-pair loss for a training method name (``"dpo"`` or ``"todo"``).

    DPO ignores the tie flag and treats every pair as ``y1`` preferred.
    """
    if method == "dpo":
        return dpo_loss(mu)
    if method == "todo":
        return todo_loss(mu, is_tie, tp)
    raise DomainError(f"unknown method {method!r}")
