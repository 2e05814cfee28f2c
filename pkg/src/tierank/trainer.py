"""Mini-batch DPO / TODO optimisation of a tabular policy.

Each step averages per-pair parameter gradients in batch order, then applies
SGD or Adam with a cosine learning rate that decays from ``learning_rate`` to
zero over the run (no warmup). Runs are bit-reproducible for a fixed seed.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DivergenceError
from .io import csv_text
from .policy import DEFAULT_BETA, PolicyTable, batch_loss_and_grad, index_pairs

METHODS = ("dpo", "todo")
OPTIMIZERS = ("sgd", "adam")


@dataclass(frozen=True)
class TrainConfig:
    method: str = "todo"
    alpha: float = 0.5
    beta: float = DEFAULT_BETA
    learning_rate: float = 0.05
    epochs: int = 3
    batch_size: int = 64
    optimizer: str = "adam"
    adam_params: tuple = (0.9, 0.999, 1e-8)
    seed: int = 0
    shuffle: bool = True

    def __post_init__(self):
        object.__setattr__(self, "adam_params", tuple(float(x) for x in self.adam_params))
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigError(f"optimizer must be one of {OPTIMIZERS}, got {self.optimizer!r}")
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ConfigError("alpha must be finite and >= 0")
        if not (self.beta > 0.0 and math.isfinite(self.beta)):
            raise ConfigError("beta must be positive")
        if not (self.learning_rate > 0.0):
            raise ConfigError("learning_rate must be positive")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be positive")
        if len(self.adam_params) != 3:
            raise ConfigError("adam_params is (b1, b2, eps)")

    def to_json(self) -> dict:
        d = asdict(self)
        d["adam_params"] = list(self.adam_params)
        return d


class TraceRecord(NamedTuple):
    step: int
    mean_margin: float
    mean_loss: float
    tie_fraction: float


@dataclass
class MarginTrace:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    @property
    def steps(self) -> np.ndarray:
        return np.array([r.step for r in self.records], dtype=np.int64)

    @property
    def mean_margin(self) -> np.ndarray:
        return np.array([r.mean_margin for r in self.records])

    @property
    def mean_loss(self) -> np.ndarray:
        return np.array([r.mean_loss for r in self.records])

    def to_csv(self) -> str:
        return csv_text(TraceRecord._fields, self.records)

    @classmethod
    def from_rows(cls, rows) -> "MarginTrace":
        return cls([
            TraceRecord(int(r["step"]), float(r["mean_margin"]), float(r["mean_loss"]), float(r["tie_fraction"]))
            for r in rows
        ])


def cosine_lr(base: float, step: int, total: int) -> float:
    return 0.5 * base * (1.0 + math.cos(math.pi * step / total))


class _Adam:
    def __init__(self, n, b1, b2, eps):
        self.m = np.zeros(n)
        self.v = np.zeros(n)
        self.b1, self.b2, self.eps = b1, b2, eps
        self.t = 0

    def delta(self, grad, lr):
        self.t += 1
        self.m = self.b1 * self.m + (1.0 - self.b1) * grad
        self.v = self.b2 * self.v + (1.0 - self.b2) * grad * grad
        mhat = self.m / (1.0 - self.b1 ** self.t)
        vhat = self.v / (1.0 - self.b2 ** self.t)
        return lr * mhat / (np.sqrt(vhat) + self.eps)


def train(corpus, policy_init: PolicyTable, reference: PolicyTable, cfg: TrainConfig):
    """Minimise the DPO or TODO objective; returns ``(policy, MarginTrace)``.

    Raises :class:`DivergenceError` on the first non-finite batch loss.
    """
    if not policy_init.same_layout(reference):
        raise ConfigError("policy and reference tables have different layouts")
    pairs = list(corpus)
    if not pairs:
        raise ConfigError("cannot train on an empty corpus")
    idx = index_pairs(policy_init, pairs)
    if cfg.method == "todo" and cfg.alpha == 0.0 and idx.is_tie.any():
        raise ConfigError("TODO on a corpus with tied pairs needs alpha > 0")

    n = len(idx)
    per_epoch = -(-n // cfg.batch_size)
    total = cfg.epochs * per_epoch
    rng = np.random.default_rng(cfg.seed)
    ref_logp = reference.log_probs()
    policy = policy_init.copy()
    opt = _Adam(len(policy), *cfg.adam_params) if cfg.optimizer == "adam" else None
    trace = MarginTrace()

    step = 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n) if cfg.shuffle else np.arange(n)
        for b in range(per_epoch):
            batch = idx.take(order[b * cfg.batch_size:(b + 1) * cfg.batch_size])
            losses, mu, grad = batch_loss_and_grad(cfg.method, policy, ref_logp, batch, cfg.beta, cfg.alpha)
            mean_loss = float(losses.mean())
            if not math.isfinite(mean_loss):
                raise DivergenceError(step)
            trace.records.append(TraceRecord(step, float(mu.mean()), mean_loss, float(batch.is_tie.mean())))
            lr = cosine_lr(cfg.learning_rate, step, total)
            if opt is None:
                policy.logits -= lr * grad
            else:
                policy.logits -= opt.delta(grad, lr)
            step += 1
    return policy, trace


def margin_trace_summary(trace: MarginTrace) -> tuple[float, float]:
    """Least-squares ``(slope, intercept)`` of mean margin against step."""
    if len(trace) < 2:
        raise ValueError("need at least two trace records")
    x = trace.steps.astype(np.float64)
    if np.all(x == x[0]):
        raise ValueError("degenerate trace: all steps identical")
    y = trace.mean_margin
    xm = x - x.mean()
    slope = float((xm * (y - y.mean())).sum() / (xm * xm).sum())
    return slope, float(y.mean() - slope * x.mean())
