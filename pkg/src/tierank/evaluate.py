"""Ternary preference accuracy and DPO-vs-TODO comparisons."""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

import numpy as np

from .data import Corpus, LatentWorld, resample_tie_ratio, split
from .io import csv_text
from .policy import PolicyTable, _beta, batch_margins, index_pairs
from .tobt import TieLike, as_tie_param, rank_probabilities
from .trainer import TrainConfig, train

RANKS = ("prefer", "disprefer", "tie")
PREDICTED = RANKS + ("ambiguous",)


@dataclass
class EvalReport:
    n_pairs: int
    accuracy: float
    confusion: dict  # true label -> predicted rank -> count
    mean_margin: float
    correct: int = 0

    def to_json(self) -> dict:
        return {
            "n_pairs": self.n_pairs,
            "correct": self.correct,
            "accuracy": self.accuracy,
            "mean_margin": self.mean_margin,
            "confusion": self.confusion,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1, sort_keys=True) + "\n"


def predict_ranks(rewards_diff, alpha: float):
    """Strict argmax over (prefer, disprefer, tie); 3 marks a non-unique maximum."""
    probs = rank_probabilities(rewards_diff, alpha)
    best = probs.max(axis=-1, keepdims=True)
    hits = probs == best
    unique = hits.sum(axis=-1) == 1
    return np.where(unique, probs.argmax(axis=-1), 3), probs


def ternary_accuracy(policy: PolicyTable, reference: PolicyTable, test: Corpus, b, tp: TieLike,
                     include_ties: bool = False) -> EvalReport:
    """Fraction of test pairs whose label is the unique most probable TOBT rank.

    Implicit rewards are ``beta * log(pi / pi_ref)``; the prompt normaliser
    cancels in their difference. Non-tie pairs score when "prefer" wins,
    tie pairs (only if ``include_ties``) when "tie" wins. Read-only.
    """
    beta = _beta(b)
    alpha = as_tie_param(tp).alpha
    pairs = [p for p in test if include_ties or not p.is_tie]
    confusion = {lab: {r: 0 for r in PREDICTED} for lab in ("prefer", "tie")}
    if not pairs:
        return EvalReport(0, 0.0, confusion, 0.0, 0)
    idx = index_pairs(policy, pairs)
    mu = batch_margins(policy.log_probs(), reference.log_probs(), idx, beta)
    pred, _ = predict_ranks(mu, alpha)
    truth = np.where(idx.is_tie, 2, 0)
    correct = int((pred == truth).sum())
    for t, p in zip(truth.tolist(), pred.tolist()):
        confusion["tie" if t == 2 else "prefer"][PREDICTED[p]] += 1
    return EvalReport(len(pairs), correct / len(pairs), confusion, float(mu.mean()), correct)


@dataclass(frozen=True)
class CompareRow:
    tie_ratio: float
    method: str
    seed: int
    accuracy: float
    mean_margin: float
    margin_slope: float = float("nan")
    baseline_accuracy: float = float("nan")


@dataclass
class Comparison:
    rows: list = field(default_factory=list)

    def to_csv(self) -> str:
        return csv_text(
            ("tie_ratio", "method", "seed", "accuracy", "mean_margin"),
            [(r.tie_ratio, r.method, r.seed, r.accuracy, r.mean_margin) for r in self.rows],
        )

    def cell(self, tie_ratio: float, method: str) -> np.ndarray:
        return np.array([r.accuracy for r in self.rows if r.tie_ratio == tie_ratio and r.method == method])

    def summary(self) -> list[dict]:
        out = []
        keys = []
        for r in self.rows:
            if (r.tie_ratio, r.method) not in keys:
                keys.append((r.tie_ratio, r.method))
        for ratio, method in keys:
            acc = self.cell(ratio, method)
            out.append({
                "tie_ratio": ratio, "method": method, "n": int(acc.size),
                "mean_accuracy": float(acc.mean()), "std_accuracy": float(acc.std()),
            })
        return out


def compare(world: LatentWorld, corpus: Corpus, tie_ratios, methods, seeds, cfg: TrainConfig, *,
            train_size: int | None = None, test_fraction: float = 0.1, split_by: str = "pair",
            eval_alpha: float | None = None, reference: PolicyTable | None = None) -> Comparison:
    """Train and evaluate every (tie ratio, method, seed) cell.

    For each seed the corpus is split once (non-tie test pairs), and for each
    ratio the remaining pairs are resampled once; every method then trains on
    the same data from the reference policy. ``eval_alpha`` defaults to
    ``cfg.alpha`` and is used for all methods.
    """
    from .trainer import margin_trace_summary

    if reference is None:
        reference = PolicyTable.uniform(world.registry)
    eval_alpha = cfg.alpha if eval_alpha is None else eval_alpha
    result = Comparison()
    for ratio in tie_ratios:
        for seed in seeds:
            pool, test = split(corpus, test_fraction, seed, exclude_ties_from_test=True, by=split_by)
            train_set = resample_tie_ratio(pool, ratio, seed, train_size)
            base = ternary_accuracy(reference, reference, test, cfg.beta, eval_alpha).accuracy
            for method in methods:
                run_cfg = replace(cfg, method=method, seed=seed)
                policy, trace = train(train_set, reference, reference, run_cfg)
                rep = ternary_accuracy(policy, reference, test, cfg.beta, eval_alpha)
                slope = margin_trace_summary(trace)[0] if len(trace) >= 2 else float("nan")
                result.rows.append(CompareRow(float(ratio), method, int(seed), rep.accuracy, rep.mean_margin,
                                              slope, base))
    return result
