import math

import numpy as np
import pytest

from tierank.alpha import (
    AlphaSimConfig,
    alpha_csv,
    default_alpha_grid,
    emit_alpha_csv,
    read_alpha_csv,
    simulate_alpha,
)
from tierank.errors import ConfigError

# mpmath: softplus(0.5), -log((e - 1) / (1 + e^0.5)^2)
PREF_0 = 0.97407698418010668087
TIE_0 = 1.4068291137472952528


def test_default_grid():
    g = default_alpha_grid()
    assert g[0] == 0.01 and g[-1] == 10.0
    assert 0.1 in g and 0.5 in g and 1.0 in g and 9.5 in g
    assert len(g) == len(set(g)) == 10 + 18 + 18
    assert all(b > a for a, b in zip(g, g[1:]))


def test_alpha_half_feasible_at_zero_margin():
    (r,) = simulate_alpha(AlphaSimConfig(alpha_grid=(0.5,), mu_sigma=0.0, mu_samples=3))
    assert r.mean_pref_loss == pytest.approx(PREF_0, rel=1e-14)
    assert r.mean_tie_loss == pytest.approx(TIE_0, rel=1e-14)
    assert r.feasible


def test_default_run():
    res = simulate_alpha(AlphaSimConfig())
    by = {r.alpha: r for r in res}
    assert by[0.5].feasible and by[0.5].mean_pref_loss <= 1.0 and by[0.5].mean_tie_loss <= 1.5
    assert not any(r.feasible for r in res if r.alpha >= 1.0)
    pref = np.array([r.mean_pref_loss for r in res])
    assert np.all(np.diff(pref) > 0)
    assert all(r.mean_pref_loss > 1.0 for r in res if r.alpha >= 1.0)


def test_tie_loss_at_zero_decreasing():
    res = simulate_alpha(AlphaSimConfig(mu_sigma=0.0, mu_samples=1))
    tie = np.array([r.mean_tie_loss for r in res])
    assert np.all(np.diff(tie) < 0)
    a = np.array([r.alpha for r in res])
    closed = -np.log(np.expm1(2 * a) / (1 + np.exp(a)) ** 2)
    np.testing.assert_allclose(tie, closed, rtol=1e-12, atol=1e-14)


def test_deterministic_csv():
    cfg = AlphaSimConfig(seed=4)
    assert alpha_csv(simulate_alpha(cfg)) == alpha_csv(simulate_alpha(cfg))
    assert alpha_csv(simulate_alpha(cfg)) != alpha_csv(simulate_alpha(AlphaSimConfig(seed=5)))


def test_csv_roundtrip(tmp_path):
    res = simulate_alpha(AlphaSimConfig(alpha_grid=(0.1, 0.5, 2.0), mu_samples=777, seed=2))
    path = tmp_path / "alpha.csv"
    emit_alpha_csv(res, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "alpha,mean_pref_loss,mean_tie_loss,feasible" and len(lines) == 4
    assert read_alpha_csv(path) == res


def test_empty_results():
    with pytest.raises(ValueError):
        alpha_csv([])


@pytest.mark.parametrize("kw", [
    {"alpha_grid": ()}, {"alpha_grid": (0.5, 0.2)}, {"alpha_grid": (0.0, 1.0)}, {"alpha_grid": (0.3, 0.3)},
    {"pref_threshold": 0.0}, {"tie_threshold": -1.0}, {"mu_samples": 0},
])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        AlphaSimConfig(**kw)


def test_config_json():
    cfg = AlphaSimConfig(alpha_grid=(0.2, 0.4), seed=3)
    assert AlphaSimConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ConfigError):
        AlphaSimConfig.from_json({"bogus": 1})


def test_thresholds_change_feasibility():
    (r,) = simulate_alpha(AlphaSimConfig(alpha_grid=(0.5,), tie_threshold=1.4, mu_sigma=0.0))
    assert not r.feasible and math.isfinite(r.mean_tie_loss)
