"""Screening of the tie buffer alpha by initial-stage losses.

Margins near the start of training are close to zero (policy == reference),
so they are emulated as ``Normal(0, mu_sigma**2)`` draws. For each alpha the
mean preference and tie losses are compared against fixed ceilings.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError
from .io import atomic_write_text, csv_text, read_csv
from .losses import todo_pref_loss, todo_tie_loss


def default_alpha_grid() -> tuple[float, ...]:
    fine = np.round(np.arange(1, 11) * 0.01, 10)
    mid = np.round(0.1 + np.arange(19) * 0.05, 10)
    coarse = np.round(1.0 + np.arange(19) * 0.5, 10)
    return tuple(float(a) for a in np.unique(np.concatenate([fine, mid, coarse])))


@dataclass(frozen=True)
class AlphaSimConfig:
    alpha_grid: tuple = field(default_factory=default_alpha_grid)
    mu_samples: int = 10_000
    mu_sigma: float = 0.1
    pref_threshold: float = 1.0
    tie_threshold: float = 1.5
    seed: int = 0

    def __post_init__(self):
        grid = tuple(float(a) for a in self.alpha_grid)
        object.__setattr__(self, "alpha_grid", grid)
        if not grid:
            raise ConfigError("alpha grid is empty")
        if any(a <= 0 for a in grid) or any(b <= a for a, b in zip(grid, grid[1:])):
            raise ConfigError("alpha grid must be positive and strictly increasing")
        if self.pref_threshold <= 0 or self.tie_threshold <= 0:
            raise ConfigError("thresholds must be positive")
        if self.mu_samples < 1 or self.mu_sigma < 0:
            raise ConfigError("need mu_samples >= 1 and mu_sigma >= 0")

    @classmethod
    def from_json(cls, obj: dict) -> "AlphaSimConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown alpha-sim config keys: {sorted(extra)}")
        return cls(**obj)

    def to_json(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


class AlphaResult(NamedTuple):
    alpha: float
    mean_pref_loss: float
    mean_tie_loss: float
    feasible: bool


def simulate_alpha(cfg: AlphaSimConfig) -> list[AlphaResult]:
    rng = np.random.default_rng(cfg.seed)
    mu = rng.normal(0.0, cfg.mu_sigma, size=cfg.mu_samples)
    out = []
    for a in cfg.alpha_grid:
        pref = float(np.mean(todo_pref_loss(mu, a).loss))
        tie = float(np.mean(todo_tie_loss(mu, a).loss))
        out.append(AlphaResult(a, pref, tie, pref <= cfg.pref_threshold and tie <= cfg.tie_threshold))
    return out


def alpha_csv(results) -> str:
    if not results:
        raise ValueError("no alpha results to write")
    return csv_text(AlphaResult._fields, [(r.alpha, r.mean_pref_loss, r.mean_tie_loss, str(r.feasible).lower())
                                          for r in results])


def emit_alpha_csv(results, path):
    return atomic_write_text(path, alpha_csv(results))


def read_alpha_csv(path) -> list[AlphaResult]:
    return [
        AlphaResult(float(r["alpha"]), float(r["mean_pref_loss"]), float(r["mean_tie_loss"]), r["feasible"] == "true")
        for r in read_csv(path)
    ]


def load_config(path) -> AlphaSimConfig:
    with open(path, encoding="utf-8") as fh:
        return AlphaSimConfig.from_json(json.load(fh))
