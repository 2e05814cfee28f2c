"""Preference-pair corpora: ingestion, tie labelling, resampling, splitting
and synthetic generation from a latent reward world.

Tied pairs are oriented lexicographically by response id; other pairs put
the higher-scored response first.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError
from .io import atomic_write_text
from .tobt import TieLike, TieParam, as_tie_param, rank_probabilities

_RATIO_EPS = 1e-9


@dataclass(frozen=True)
class PreferencePair:
    prompt_id: str
    y1_id: str
    y2_id: str
    is_tie: bool = False
    score_1: Optional[float] = None
    score_2: Optional[float] = None

    def __post_init__(self):
        if self.y1_id == self.y2_id:
            raise DataError(f"self-pair {self.y1_id!r} in prompt {self.prompt_id!r}")
        if (self.score_1 is None) != (self.score_2 is None):
            raise DataError("scores must be both present or both absent")
        if self.score_1 is not None and not self.is_tie and self.score_1 < self.score_2:
            raise DataError(f"non-tie pair ({self.y1_id}, {self.y2_id}) has score_1 < score_2")

    def swapped(self) -> "PreferencePair":
        return PreferencePair(self.prompt_id, self.y2_id, self.y1_id, self.is_tie, self.score_2, self.score_1)

    def to_record(self) -> dict:
        return {
            "prompt_id": self.prompt_id,
            "y1_id": self.y1_id,
            "y2_id": self.y2_id,
            "score_1": self.score_1,
            "score_2": self.score_2,
            "is_tie": self.is_tie,
        }


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable list of pairs. The registry is derived from the pairs."""

    pairs: tuple[PreferencePair, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "pairs", tuple(self.pairs))

    def __len__(self):
        return len(self.pairs)

    def __iter__(self):
        return iter(self.pairs)

    @cached_property
    def registry(self) -> dict[str, tuple[str, ...]]:
        """Prompt -> sorted response ids, prompts in order of first appearance."""
        seen: dict[str, set] = {}
        for p in self.pairs:
            seen.setdefault(p.prompt_id, set()).update((p.y1_id, p.y2_id))
        return {pid: tuple(sorted(r)) for pid, r in seen.items()}

    @property
    def n_ties(self) -> int:
        return sum(1 for p in self.pairs if p.is_tie)

    @property
    def tie_ratio(self) -> float:
        return self.n_ties / len(self.pairs) if self.pairs else 0.0


def quantize(score: float, step: Optional[float]) -> float:
    """Snap a score to the grid ``k * step``; ``None`` keeps it, ``inf`` maps all to 0."""
    if step is None:
        return float(score)
    if math.isinf(step):
        return 0.0
    return math.floor(score / step) * step


def orient(prompt_id, a_id, b_id, score_a=None, score_b=None, is_tie=None) -> PreferencePair:
    """Build a canonical pair from two scored (or explicitly labelled) responses."""
    if score_a is not None and score_b is not None:
        tie = score_a == score_b
        if is_tie is not None and bool(is_tie) != tie:
            raise DataError("explicit is_tie contradicts the scores")
        if tie:
            if b_id < a_id:
                a_id, b_id, score_a, score_b = b_id, a_id, score_b, score_a
        elif score_a < score_b:
            a_id, b_id, score_a, score_b = b_id, a_id, score_b, score_a
        return PreferencePair(prompt_id, a_id, b_id, tie, score_a, score_b)
    if is_tie is None:
        raise DataError("record needs both scores or an explicit is_tie")
    if is_tie and b_id < a_id:
        a_id, b_id = b_id, a_id
    return PreferencePair(prompt_id, a_id, b_id, bool(is_tie))


def parse_jsonl(lines, quantization_step: Optional[float] = None) -> Corpus:
    pairs = []
    seen = set()
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
            pid = str(rec["prompt_id"])
            a, b = str(rec["y1_id"]), str(rec["y2_id"])
            s1, s2 = rec.get("score_1"), rec.get("score_2")
            is_tie = rec.get("is_tie")
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise DataError(f"line {lineno}: malformed record ({exc})") from None
        if a == b:
            raise DataError(f"line {lineno}: self-pair {a!r}")
        if (s1 is None) != (s2 is None):
            raise DataError(f"line {lineno}: only one score present")
        try:
            if s1 is not None:
                s1 = quantize(float(s1), quantization_step)
                s2 = quantize(float(s2), quantization_step)
            if is_tie is not None and not isinstance(is_tie, bool):
                raise DataError("is_tie must be a boolean")
            pair = orient(pid, a, b, s1, s2, is_tie)
        except (DataError, TypeError, ValueError) as exc:
            raise DataError(f"line {lineno}: {exc}") from None
        key = (pid, frozenset((a, b)))
        if key in seen:
            raise DataError(f"line {lineno}: duplicate pair ({a}, {b}) in prompt {pid!r}")
        seen.add(key)
        pairs.append(pair)
    return Corpus(pairs)


def ingest(path, quantization_step: Optional[float] = None) -> Corpus:
    """Read a pair JSONL file.

    Pairs are tied exactly when their (optionally quantized) scores are equal;
    records without scores must carry ``is_tie``.
    """
    with open(path, encoding="utf-8") as fh:
        return parse_jsonl(fh, quantization_step)


def dumps_jsonl(corpus: Corpus) -> str:
    return "".join(json.dumps(p.to_record()) + "\n" for p in corpus.pairs)


def emit(corpus: Corpus, path) -> Path:
    return atomic_write_text(path, dumps_jsonl(corpus))


def _max_size(n_tie: int, n_other: int, ratio: float) -> int:
    n = n_tie + n_other
    while n > 0:
        k = math.floor(n * ratio + _RATIO_EPS)
        if k <= n_tie and n - k <= n_other:
            return n
        n -= 1
    return 0


def resample_tie_ratio(c: Corpus, target_ratio: float, seed: int, size: Optional[int] = None) -> Corpus:
    """Stratified subsample with exactly ``floor(size * ratio)`` tied pairs.

    Each stratum is sampled uniformly without replacement and the result is
    shuffled. ``size`` defaults to the largest feasible output.
    """
    if not 0.0 <= target_ratio <= 1.0:
        raise DataError(f"tie ratio must lie in [0, 1], got {target_ratio}")
    ties = [i for i, p in enumerate(c.pairs) if p.is_tie]
    others = [i for i, p in enumerate(c.pairs) if not p.is_tie]
    if size is None:
        size = _max_size(len(ties), len(others), target_ratio)
    n_tie = math.floor(size * target_ratio + _RATIO_EPS)
    n_other = size - n_tie
    if size <= 0 or n_tie > len(ties) or n_other > len(others):
        raise DataError(
            f"cannot draw {size} pairs at tie ratio {target_ratio}: "
            f"need {n_tie} tie / {n_other} non-tie, have {len(ties)} / {len(others)}"
        )
    rng = np.random.default_rng(seed)
    pick = np.concatenate([
        rng.choice(np.asarray(ties, dtype=np.int64), n_tie, replace=False),
        rng.choice(np.asarray(others, dtype=np.int64), n_other, replace=False),
    ])
    pick = pick[rng.permutation(size)]
    return Corpus(tuple(c.pairs[i] for i in pick))


def split(c: Corpus, test_fraction: float, seed: int, exclude_ties_from_test: bool = True,
          by: str = "prompt") -> tuple[Corpus, Corpus]:
    """Train/test split; ``by="prompt"`` keeps every prompt on one side.

    ``by="pair"`` holds out individual pairs instead (prompts are shared);
    with ``exclude_ties_from_test`` held-out pairs are drawn from non-tie
    pairs only and all ties stay in training. With ``by="prompt"`` tied pairs
    of test prompts are dropped.
    """
    if not 0.0 < test_fraction < 1.0:
        raise DataError(f"test_fraction must lie in (0, 1), got {test_fraction}")
    rng = np.random.default_rng(seed)
    if by == "prompt":
        prompts = list(c.registry)
        n_test = round(test_fraction * len(prompts))
        if n_test == 0 or n_test == len(prompts):
            raise DataError(f"cannot split {len(prompts)} prompts at fraction {test_fraction}")
        test_prompts = {prompts[i] for i in rng.permutation(len(prompts))[:n_test]}
        train = [p for p in c.pairs if p.prompt_id not in test_prompts]
        test = [p for p in c.pairs if p.prompt_id in test_prompts and not (exclude_ties_from_test and p.is_tie)]
    elif by == "pair":
        eligible = [i for i, p in enumerate(c.pairs) if not (exclude_ties_from_test and p.is_tie)]
        n_test = round(test_fraction * len(c.pairs))
        if n_test == 0 or n_test > len(eligible) or n_test == len(c.pairs):
            raise DataError(f"cannot hold out {n_test} of {len(eligible)} eligible pairs")
        held = set(rng.choice(np.asarray(eligible, dtype=np.int64), n_test, replace=False).tolist())
        train = [p for i, p in enumerate(c.pairs) if i not in held]
        test = [p for i, p in enumerate(c.pairs) if i in held]
    else:
        raise DataError(f"unknown split mode {by!r}")
    if not train or not test:
        raise DataError("split leaves an empty side")
    return Corpus(train), Corpus(test)


# ---------------------------------------------------------------------------
# synthetic worlds
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LatentWorld:
    """Latent rewards ``r*(x, y)`` for every registered response."""

    registry: dict
    rewards: np.ndarray  # (n_prompts, candidates_per_prompt)
    gen_alpha: TieParam = field(default_factory=lambda: TieParam(0.0))
    quantization_step: float = 0.5
    seed: int = 0

    def reward(self, prompt_id: str, response_id: str) -> float:
        i = list(self.registry).index(prompt_id)
        j = self.registry[prompt_id].index(response_id)
        return float(self.rewards[i, j])

    def to_json(self) -> dict:
        return {
            "rewards": [
                {"prompt_id": pid, "response_id": rid, "r": float(self.rewards[i, j])}
                for i, (pid, cands) in enumerate(self.registry.items())
                for j, rid in enumerate(cands)
            ],
            "quantization_step": self.quantization_step,
            "seed": self.seed,
            "gen_alpha": self.gen_alpha.alpha,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=1) + "\n"

    @classmethod
    def from_json(cls, obj) -> "LatentWorld":
        registry: dict[str, list] = {}
        values: dict[str, list] = {}
        try:
            for rec in obj["rewards"]:
                registry.setdefault(rec["prompt_id"], []).append(rec["response_id"])
                values.setdefault(rec["prompt_id"], []).append(float(rec["r"]))
            widths = {len(v) for v in values.values()}
            if len(widths) != 1:
                raise DataError("every prompt must have the same number of candidates")
            return cls(
                {k: tuple(v) for k, v in registry.items()},
                np.array([values[k] for k in registry], dtype=np.float64),
                TieParam(float(obj.get("gen_alpha", 0.0))),
                float(obj["quantization_step"]),
                int(obj["seed"]),
            )
        except (KeyError, TypeError) as exc:
            raise DataError(f"malformed world file: {exc}") from None

    @classmethod
    def loads(cls, text: str) -> "LatentWorld":
        return cls.from_json(json.loads(text))


def _label_pairs(world: LatentWorld, labeling: str, rng) -> Corpus:
    step = world.quantization_step
    pairs = []
    for i, (pid, cands) in enumerate(world.registry.items()):
        r = world.rewards[i]
        for j in range(len(cands)):
            for k in range(j + 1, len(cands)):
                if labeling == "quantize":
                    pairs.append(orient(pid, cands[j], cands[k], quantize(r[j], step), quantize(r[k], step)))
                elif labeling == "tobt":
                    probs = rank_probabilities(r[j] - r[k], world.gen_alpha.alpha)
                    outcome = rng.choice(3, p=probs / probs.sum())
                    if outcome == 2:
                        pairs.append(orient(pid, cands[j], cands[k], is_tie=True))
                    elif outcome == 0:
                        pairs.append(PreferencePair(pid, cands[j], cands[k], False))
                    else:
                        pairs.append(PreferencePair(pid, cands[k], cands[j], False))
                else:
                    raise DataError(f"unknown labeling {labeling!r}")
    return Corpus(pairs)


def generate_synthetic(n_prompts: int, candidates_per_prompt: int, reward_spread: float, tp: TieLike,
                       quantization_step: float, seed: int, labeling: str = "quantize"):
    """Draw a latent world and label every unordered candidate pair.

    Rewards are i.i.d. ``Normal(0, reward_spread**2)``. With
    ``labeling="quantize"`` a pair is tied when both rewards fall in the same
    ``quantization_step`` bin, and the stored scores are the bin values. With
    ``labeling="tobt"`` each outcome is sampled from the TOBT probabilities
    at ``tp`` and no scores are stored.
    """
    if n_prompts < 1 or candidates_per_prompt < 2:
        raise DataError("need at least one prompt and two candidates per prompt")
    if not (quantization_step > 0):
        raise DataError("quantization_step must be positive")
    rng = np.random.default_rng(seed)
    wp = len(str(n_prompts - 1))
    wc = len(str(candidates_per_prompt - 1))
    registry = {
        f"p{i:0{wp}d}": tuple(f"r{j:0{wc}d}" for j in range(candidates_per_prompt))
        for i in range(n_prompts)
    }
    rewards = rng.normal(0.0, reward_spread, size=(n_prompts, candidates_per_prompt))
    world = LatentWorld(registry, rewards, as_tie_param(tp), float(quantization_step), int(seed))
    return world, _label_pairs(world, labeling, rng)
