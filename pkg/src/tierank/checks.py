"""Numerical self-checks: closed forms against quadrature, analytic
derivatives against central differences."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import PreferencePair
from .losses import dpo_loss, todo_pref_loss, todo_tie_loss
from .policy import PolicyTable, finite_diff_check
from .tobt import quadrature_oracle, rank_probabilities

CLOSED_FORM_TOL = 1e-8
LOSS_FD_TOL = 1e-6
POLICY_FD_TOL = 1e-5
FD_STEP = 1e-5
MU_GRID = np.round(np.arange(-40, 41) * 0.25, 10)
ALPHAS = (0.1, 0.5, 0.8)


def rel_err(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = np.maximum(np.abs(a), np.abs(b))
    return np.where(den == 0.0, 0.0, np.abs(a - b) / np.where(den == 0.0, 1.0, den))


def closed_form_errors(n_cases: int, seed: int, max_abs_d: float = 10.0, max_alpha: float = 3.0) -> np.ndarray:
    """Per-case max component error between quadrature and closed form."""
    rng = np.random.default_rng(seed)
    d = rng.uniform(-max_abs_d, max_abs_d, n_cases)
    alpha = max_alpha * (1.0 - rng.random(n_cases))  # (0, max_alpha]
    errs = np.empty(n_cases)
    for i in range(n_cases):
        quad = np.array(quadrature_oracle(d[i], alpha[i]).as_tuple())
        closed = rank_probabilities(d[i], alpha[i])
        errs[i] = np.abs(quad - closed).max()
    return errs


def loss_derivative_errors(fault: bool = False, h: float = FD_STEP) -> dict[str, float]:
    """Max relative error of dloss/dmu against central differences on the grid."""
    out = {}
    mu = MU_GRID
    sign = -1.0 if fault else 1.0
    out["dpo"] = float(rel_err(sign * dpo_loss(mu).dloss_dmu, (dpo_loss(mu + h).loss - dpo_loss(mu - h).loss) / (2 * h)).max())
    for name, fn in (("todo_pref", todo_pref_loss), ("todo_tie", todo_tie_loss)):
        worst = 0.0
        for a in ALPHAS:
            numeric = (fn(mu + h, a).loss - fn(mu - h, a).loss) / (2 * h)
            worst = max(worst, float(rel_err(sign * fn(mu, a).dloss_dmu, numeric).max()))
        out[name] = worst
    return out


def random_policy_case(rng, max_candidates: int = 6):
    """A single-prompt policy/reference pair with random logits and a random pair."""
    k = int(rng.integers(2, max_candidates + 1))
    cands = [f"r{j}" for j in range(k)]
    registry = {"x": cands}
    policy = PolicyTable(registry, rng.normal(0.0, 2.0, k))
    reference = PolicyTable(registry, rng.normal(0.0, 2.0, k))
    j1, j2 = rng.choice(k, 2, replace=False)
    pair = PreferencePair("x", cands[j1], cands[j2], bool(rng.random() < 0.5))
    return policy, reference, pair


def policy_gradient_errors(n_cases: int, seed: int, fault: bool = False) -> np.ndarray:
    """Finite-difference check of full parameter gradients on random tables.

    Beta is drawn log-uniform in [0.01, 10] so margins cover both the
    near-zero regime of beta = 0.01 and saturated regimes.
    """
    rng = np.random.default_rng(seed)
    errs = np.empty(n_cases)
    for i in range(n_cases):
        policy, reference, pair = random_policy_case(rng)
        beta = float(10.0 ** rng.uniform(-2.0, 1.0))
        alpha = float(rng.choice(ALPHAS))
        errs[i] = finite_diff_check(policy, reference, pair, beta, alpha, fault=fault)
    return errs


@dataclass
class CheckReport:
    lines: list = field(default_factory=list)
    passed: bool = True

    def add(self, name: str, value: float, tol: float):
        ok = bool(value <= tol)
        self.passed &= ok
        self.lines.append(f"{'PASS' if ok else 'FAIL'} {name}: max error {value:.3e} (tol {tol:.0e})")

    @property
    def text(self) -> str:
        return "\n".join(self.lines + [f"overall: {'PASS' if self.passed else 'FAIL'}"]) + "\n"


def run_oracle_suite(n_cases: int = 100, seed: int = 0, fault: bool = False) -> CheckReport:
    if n_cases < 1:
        raise ValueError("n_cases must be >= 1")
    rep = CheckReport()
    rep.add("closed form vs quadrature", float(closed_form_errors(n_cases, seed).max()), CLOSED_FORM_TOL)
    for name, v in loss_derivative_errors(fault).items():
        rep.add(f"d{name}/dmu vs central difference", v, LOSS_FD_TOL)
    rep.add("policy gradient vs central difference",
            float(policy_gradient_errors(max(n_cases, 1), seed + 1, fault).max()), POLICY_FD_TOL)
    return rep
