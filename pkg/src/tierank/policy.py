"""Tabular softmax policies over a fixed candidate set per prompt.

Logits are stored flat, prompt after prompt, with ``offsets[i]:offsets[i+1]``
the slice belonging to prompt ``i``. The same layout is used for the
trainable policy, the frozen reference and parameter gradients.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError, DomainError
from .losses import method_loss, todo_loss
from .tobt import TieLike, as_tie_param

DEFAULT_BETA = 0.01


@dataclass(frozen=True)
class Beta:
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        b = float(self.beta)
        if not (math.isfinite(b) and b > 0.0):
            raise DomainError(f"beta must be positive, got {self.beta!r}")
        object.__setattr__(self, "beta", b)


def _beta(b) -> float:
    return b.beta if isinstance(b, Beta) else Beta(b).beta


class PolicyTable:
    """Per-prompt logits over an ordered list of candidate responses."""

    def __init__(self, registry: Mapping[str, Sequence[str]], logits=None):
        prompts = []
        responses = []
        offsets = [0]
        index = {}
        for pid, cands in registry.items():
            cands = tuple(cands)
            if len(cands) < 2:
                raise DataError(f"prompt {pid!r} needs at least 2 candidates")
            if len(set(cands)) != len(cands):
                raise DataError(f"prompt {pid!r} has duplicate candidates")
            for rid in cands:
                index[(pid, rid)] = len(responses)
                responses.append(rid)
            prompts.append((pid, cands))
            offsets.append(len(responses))
        self.prompts: tuple[tuple[str, tuple[str, ...]], ...] = tuple(prompts)
        self.offsets = np.asarray(offsets, dtype=np.int64)
        self.index: dict[tuple[str, str], int] = index
        self.prompt_index = {pid: i for i, (pid, _) in enumerate(prompts)}
        if logits is None:
            logits = np.zeros(len(responses))
        logits = np.array(logits, dtype=np.float64)
        if logits.shape != (len(responses),):
            raise DataError(f"expected {len(responses)} logits, got shape {logits.shape}")
        self.logits = logits

    @classmethod
    def uniform(cls, registry):
        return cls(registry)

    @property
    def registry(self) -> dict[str, tuple[str, ...]]:
        return dict(self.prompts)

    def __len__(self):
        return self.logits.shape[0]

    def copy(self) -> "PolicyTable":
        return self.with_logits(self.logits.copy())

    def with_logits(self, logits) -> "PolicyTable":
        new = object.__new__(PolicyTable)
        new.prompts = self.prompts
        new.offsets = self.offsets
        new.index = self.index
        new.prompt_index = self.prompt_index
        new.logits = np.array(logits, dtype=np.float64)
        if new.logits.shape != self.logits.shape:
            raise DataError("logit vector does not match the table layout")
        return new

    def same_layout(self, other: "PolicyTable") -> bool:
        return self.prompts == other.prompts

    def flat_index(self, prompt_id: str, response_id: str) -> int:
        try:
            return self.index[(prompt_id, response_id)]
        except KeyError:
            raise DataError(f"unknown (prompt, response) id: ({prompt_id!r}, {response_id!r})") from None

    def log_probs(self) -> np.ndarray:
        return kernels.segment_log_softmax(self.logits, self.offsets)

    def probs(self) -> np.ndarray:
        return np.exp(self.log_probs())

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(repr(self.prompts).encode())
        h.update(self.logits.tobytes())
        return h.hexdigest()

    # serialisation ---------------------------------------------------------

    def to_json(self) -> dict:
        return {
            "prompts": [{"prompt_id": pid, "responses": list(c)} for pid, c in self.prompts],
            "logits": [
                {"prompt_id": pid, "response_id": rid, "value": float(self.logits[self.index[(pid, rid)]])}
                for pid, c in self.prompts
                for rid in c
            ],
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "PolicyTable":
        try:
            registry = {p["prompt_id"]: list(p["responses"]) for p in obj["prompts"]}
            table = cls(registry)
            for rec in obj.get("logits", []):
                table.logits[table.flat_index(rec["prompt_id"], rec["response_id"])] = float(rec["value"])
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed policy table: {exc}") from None
        return table

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> "PolicyTable":
        return cls.from_json(json.loads(text))


def log_prob(pt: PolicyTable, prompt_id: str, response_id: str) -> float:
    """Softmax log-probability of a response among its prompt's candidates."""
    j = pt.flat_index(prompt_id, response_id)
    s = pt.prompt_index[prompt_id]
    lo, hi = pt.offsets[s], pt.offsets[s + 1]
    z = pt.logits[lo:hi]
    m = z.max()
    return float(pt.logits[j] - (m + math.log(np.exp(z - m).sum())))


# ---------------------------------------------------------------------------
# pair batches
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PairIndex:
    """Pairs resolved against a table layout: prompt segment and flat ids."""

    seg: np.ndarray
    y1: np.ndarray
    y2: np.ndarray
    is_tie: np.ndarray

    def __len__(self):
        return self.seg.shape[0]

    def take(self, idx) -> "PairIndex":
        return PairIndex(self.seg[idx], self.y1[idx], self.y2[idx], self.is_tie[idx])


def index_pairs(pt: PolicyTable, pairs: Iterable) -> PairIndex:
    """Resolve pair records (anything with prompt_id/y1_id/y2_id/is_tie)."""
    seg, y1, y2, tie = [], [], [], []
    for p in pairs:
        y1.append(pt.flat_index(p.prompt_id, p.y1_id))
        y2.append(pt.flat_index(p.prompt_id, p.y2_id))
        seg.append(pt.prompt_index[p.prompt_id])
        tie.append(bool(p.is_tie))
    return PairIndex(
        np.asarray(seg, dtype=np.int64),
        np.asarray(y1, dtype=np.int64),
        np.asarray(y2, dtype=np.int64),
        np.asarray(tie, dtype=bool),
    )


def batch_margins(policy_logp, reference_logp, idx: PairIndex, beta: float) -> np.ndarray:
    ratio = policy_logp - reference_logp
    return beta * (ratio[idx.y1] - ratio[idx.y2])


def margin(policy: PolicyTable, reference: PolicyTable, pair, b) -> float:
    """Implicit reward margin ``beta * (log-ratio(y1) - log-ratio(y2))``."""
    beta = _beta(b)
    r1 = log_prob(policy, pair.prompt_id, pair.y1_id) - log_prob(reference, pair.prompt_id, pair.y1_id)
    r2 = log_prob(policy, pair.prompt_id, pair.y2_id) - log_prob(reference, pair.prompt_id, pair.y2_id)
    return beta * (r1 - r2)


def pair_param_grad(policy: PolicyTable, pair, weight_y1: float, weight_y2: float) -> np.ndarray:
    """``weight_y1 * grad log pi(y1) + weight_y2 * grad log pi(y2)`` w.r.t. all logits."""
    idx = index_pairs(policy, [pair])
    out = np.zeros(len(policy))
    return kernels.accumulate_pair_grads(
        policy.probs(), policy.offsets, idx.seg, idx.y1, idx.y2,
        np.array([float(weight_y1)]), np.array([float(weight_y2)]), out,
    )


def loss_weights(dloss_dmu, beta: float):
    """Weights on (grad log pi(y1), grad log pi(y2)) for a loss gradient."""
    w = beta * np.asarray(dloss_dmu, dtype=np.float64)
    return w, -w


def batch_loss_and_grad(method: str, policy: PolicyTable, reference_logp, idx: PairIndex, beta: float, tp: TieLike,
                        reduce: str = "mean"):
    """Loss, margins and parameter gradient for a batch of pairs.

    Returns ``(losses, margins, grad)``; ``grad`` is the mean (or sum) over
    the batch in pair order.
    """
    logp = policy.log_probs()
    mu = batch_margins(logp, reference_logp, idx, beta)
    lg = method_loss(method, mu, idx.is_tie, tp)
    w1, w2 = loss_weights(lg.dloss_dmu, beta)
    grad = kernels.accumulate_pair_grads(
        np.exp(logp), policy.offsets, idx.seg, idx.y1, idx.y2, w1, w2, np.zeros(len(policy)),
    )
    if reduce == "mean" and len(idx):
        grad /= len(idx)
    return np.asarray(lg.loss), mu, grad


def todo_pair_grad(policy: PolicyTable, reference: PolicyTable, pair, b, tp: TieLike, is_tie: bool | None = None,
                   method: str = "todo") -> np.ndarray:
    """Analytic gradient of one pair's loss with respect to every policy logit."""
    beta = _beta(b)
    tie = pair.is_tie if is_tie is None else is_tie
    mu = margin(policy, reference, pair, beta)
    lg = method_loss(method, mu, tie, tp)
    w1, w2 = loss_weights(lg.dloss_dmu, beta)
    return pair_param_grad(policy, pair, float(w1), float(w2))


def finite_diff_check(policy: PolicyTable, reference: PolicyTable, pair, b, tp: TieLike, is_tie: bool | None = None,
                      h: float = 1e-5, fault: bool = False) -> float:
    """Compare the analytic pair gradient with central differences of the loss.

    Every logit of the pair's prompt is perturbed by ``+-h``. The error of a
    component is ``|analytic - numeric|`` divided by the largest gradient
    magnitude of the pair, so components that vanish analytically are judged
    on the pair's scale rather than their own. When the whole gradient is
    below 1e-9 (for instance a tie pair at zero margin) the maximum absolute
    difference is returned instead. ``fault`` flips the analytic sign and
    exists only to self-test callers.
    """
    beta = _beta(b)
    tie = pair.is_tie if is_tie is None else bool(is_tie)
    tp = as_tie_param(tp)
    analytic = todo_pair_grad(policy, reference, pair, beta, tp, tie)
    if fault:
        analytic = -analytic

    def loss_at(logits):
        mu = margin(policy.with_logits(logits), reference, pair, beta)
        return float(todo_loss(mu, tie, tp).loss)

    s = policy.prompt_index[pair.prompt_id]
    lo, hi = int(policy.offsets[s]), int(policy.offsets[s + 1])
    numeric = np.zeros(hi - lo)
    base = policy.logits
    for k, j in enumerate(range(lo, hi)):
        plus = base.copy()
        plus[j] += h
        minus = base.copy()
        minus[j] -= h
        numeric[k] = (loss_at(plus) - loss_at(minus)) / (2.0 * h)

    a = analytic[lo:hi]
    # gradients outside the prompt must be exactly zero
    outside = np.abs(np.delete(analytic, np.arange(lo, hi))).max(initial=0.0)
    diff = np.abs(a - numeric).max()
    scale = max(np.abs(a).max(), np.abs(numeric).max())
    if scale < 1e-9:
        return float(max(diff, outside))
    return float(max(diff, outside) / scale)
