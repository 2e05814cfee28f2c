import json

import numpy as np
import pytest

from tierank.data import Corpus, PreferencePair, generate_synthetic, split
from tierank.evaluate import compare, predict_ranks, ternary_accuracy
from tierank.policy import PolicyTable
from tierank.trainer import TrainConfig, train

# mpmath: sigmoid(-0.5), 1 - 2 sigmoid(-0.5)
P0 = (0.37754066879814543536, 0.37754066879814543536, 0.24491866240370912928)


def _pair_case(mu, beta=1.0, tie=False):
    ref = PolicyTable({"x": ["a", "b"]})
    pol = ref.with_logits([mu / beta, 0.0])
    return pol, ref, Corpus([PreferencePair("x", "a", "b", tie)])


class TestSinglePair:
    def test_saturated_correct(self):
        rep = ternary_accuracy(*_pair_case(5.0), 1.0, 0.5)
        assert rep.accuracy == 1.0 and rep.confusion["prefer"]["prefer"] == 1

    def test_zero_margin_ambiguous(self):
        pred, probs = predict_ranks(0.0, 0.5)
        np.testing.assert_allclose(probs, P0, atol=1e-15)
        assert pred == 3
        rep = ternary_accuracy(*_pair_case(0.0), 1.0, 0.5)
        assert rep.accuracy == 0.0 and rep.confusion["prefer"]["ambiguous"] == 1

    def test_negative_margin(self):
        rep = ternary_accuracy(*_pair_case(-2.0), 1.0, 0.5)
        assert rep.confusion["prefer"]["disprefer"] == 1

    def test_tie_label_extension(self):
        # above ln 2 the tie rank wins near zero margin
        pol, ref, c = _pair_case(0.0, tie=True)
        assert ternary_accuracy(pol, ref, c, 1.0, 0.5).n_pairs == 0
        assert ternary_accuracy(pol, ref, c, 1.0, 1.0, include_ties=True).accuracy == 1.0
        assert ternary_accuracy(pol, ref, c, 1.0, 0.5, include_ties=True).accuracy == 0.0

    def test_tie_rank_never_wins_below_ln2(self):
        mu = np.linspace(-10, 10, 4001)
        pred, probs = predict_ranks(mu, 0.69)
        assert not np.any(pred == 2)
        assert np.abs(probs.sum(axis=-1) - 1).max() <= 1e-12


def test_report_invariants():
    world, c = generate_synthetic(30, 4, 1.0, 0.5, 0.5, seed=1)
    rng = np.random.default_rng(0)
    ref = PolicyTable(c.registry)
    pol = ref.with_logits(rng.normal(size=len(ref)))
    rep = ternary_accuracy(pol, ref, c, 0.5, 0.8, include_ties=True)
    assert rep.n_pairs == len(c)
    assert sum(sum(v.values()) for v in rep.confusion.values()) == rep.n_pairs
    assert rep.accuracy == rep.correct / rep.n_pairs
    assert json.loads(rep.dumps())["n_pairs"] == len(c)


def test_read_only():
    _, c = generate_synthetic(10, 4, 1.0, 0.5, 0.5, seed=2)
    ref = PolicyTable(c.registry)
    pol = ref.with_logits(np.random.default_rng(1).normal(size=len(ref)))
    before = (pol.digest(), ref.digest())
    ternary_accuracy(pol, ref, c, 0.01, 0.5)
    assert (pol.digest(), ref.digest()) == before


def test_per_prompt_shift_invariance():
    _, c = generate_synthetic(15, 4, 1.0, 0.5, 0.5, seed=3)
    rng = np.random.default_rng(2)
    ref = PolicyTable(c.registry, rng.normal(size=len(PolicyTable(c.registry))))
    pol = ref.with_logits(ref.logits + rng.normal(size=len(ref)))
    base = ternary_accuracy(pol, ref, c, 1.0, 0.5)
    for k in range(len(ref.prompts)):
        lo, hi = ref.offsets[k], ref.offsets[k + 1]
        z = pol.logits.copy()
        z[lo:hi] += rng.normal() * 7
        w = ref.logits.copy()
        w[lo:hi] -= 3.25
        assert ternary_accuracy(pol.with_logits(z), ref, c, 1.0, 0.5).accuracy == base.accuracy
        assert ternary_accuracy(pol, ref.with_logits(w), c, 1.0, 0.5).accuracy == base.accuracy


def test_saturated_training_is_perfect():
    _, c = generate_synthetic(20, 4, 10.0, 0.5, 1e-12, seed=4)
    assert c.n_ties == 0
    ref = PolicyTable(c.registry)
    pol, _ = train(c, ref, ref, TrainConfig(method="todo", beta=1.0, learning_rate=0.5, epochs=60, batch_size=16))
    assert ternary_accuracy(pol, ref, c, 1.0, 0.5).accuracy == 1.0


class TestCompare:
    world, corpus = generate_synthetic(30, 6, 1.0, 0.5, 0.5, seed=5)
    cfg = TrainConfig(epochs=2, batch_size=32)

    def test_alpha_zero_reduction(self):
        cfg = TrainConfig(alpha=0.0, epochs=2, batch_size=32)
        table = compare(self.world, self.corpus, [0.0], ["dpo", "todo"], [0, 1], cfg, train_size=200)
        for seed in (0, 1):
            dpo, todo = [r for r in table.rows if r.seed == seed]
            assert dpo.accuracy == todo.accuracy and dpo.mean_margin == todo.mean_margin

    def test_deterministic(self):
        a = compare(self.world, self.corpus, [0.0, 0.2], ["dpo", "todo"], [3], self.cfg, train_size=200)
        b = compare(self.world, self.corpus, [0.0, 0.2], ["dpo", "todo"], [3], self.cfg, train_size=200)
        assert a.to_csv() == b.to_csv()
        assert a.to_csv().splitlines()[0] == "tie_ratio,method,seed,accuracy,mean_margin"
        assert len(a.rows) == 4

    def test_summary(self):
        t = compare(self.world, self.corpus, [0.1], ["dpo", "todo"], [0, 1, 2], self.cfg, train_size=200)
        s = t.summary()
        assert [(r["method"], r["n"]) for r in s] == [("dpo", 3), ("todo", 3)]
        assert s[0]["mean_accuracy"] == pytest.approx(t.cell(0.1, "dpo").mean(), abs=0)

    def test_prompt_split_unseen_prompts(self):
        # a tabular policy learns nothing about prompts it never saw
        pool, test = split(self.corpus, 0.2, 0, by="prompt")
        ref = PolicyTable(self.corpus.registry)
        pol, _ = train(pool, ref, ref, self.cfg)
        assert ternary_accuracy(pol, ref, test, 0.01, 0.5).mean_margin == 0.0
