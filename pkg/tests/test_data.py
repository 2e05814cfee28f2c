import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tierank.data import (
    Corpus,
    LatentWorld,
    PreferencePair,
    dumps_jsonl,
    emit,
    generate_synthetic,
    ingest,
    parse_jsonl,
    resample_tie_ratio,
    split,
)
from tierank.errors import DataError


def lines(*records):
    return [json.dumps(r) for r in records]


def rec(a, b, s1=None, s2=None, **kw):
    return {"prompt_id": "q", "y1_id": a, "y2_id": b, "score_1": s1, "score_2": s2, **kw}


class TestIngest:
    def test_equal_scores_tie(self):
        (p,) = parse_jsonl(lines(rec("b", "a", 8.5, 8.5))).pairs
        assert p.is_tie and (p.y1_id, p.y2_id) == ("a", "b")

    def test_higher_score_first(self):
        (p,) = parse_jsonl(lines(rec("a", "b", 8.5, 7.0))).pairs
        assert not p.is_tie and p.y1_id == "a"
        (p,) = parse_jsonl(lines(rec("a", "b", 7.0, 8.5))).pairs
        assert (p.y1_id, p.score_1, p.score_2) == ("b", 8.5, 7.0)

    def test_quantized_scores(self):
        (p,) = parse_jsonl(lines(rec("a", "b", 8.6, 8.9)), quantization_step=0.5).pairs
        assert p.is_tie

    def test_explicit_labels(self):
        c = parse_jsonl(lines(rec("x", "y", is_tie=False), rec("z", "w", is_tie=True)))
        assert c.pairs[0].y1_id == "x" and not c.pairs[0].is_tie
        assert (c.pairs[1].y1_id, c.pairs[1].is_tie) == ("w", True)

    @pytest.mark.parametrize("bad, msg", [
        (["", "{not json"], "^line 2: malformed"),
        (lines(rec("a", "b")), "is_tie"),
        (lines(rec("a", "a", 1.0, 2.0)), "self-pair"),
        (lines(rec("a", "b", 1.0, None)), "one score"),
        (lines(rec("a", "b", 1.0, 1.0, is_tie=False)), "contradicts"),
        (lines(rec("a", "b", 2.0, 1.0), rec("b", "a", 1.0, 2.0)), "line 2: duplicate"),
        (lines({"prompt_id": "q", "y1_id": "a"}), "malformed"),
    ])
    def test_errors(self, bad, msg):
        with pytest.raises(DataError, match=msg):
            parse_jsonl(bad)

    def test_blank_lines_skipped(self):
        assert len(parse_jsonl(["", *lines(rec("a", "b", 1.0, 0.0)), "  "])) == 1


def test_pair_invariants():
    with pytest.raises(DataError):
        PreferencePair("q", "a", "b", False, 1.0, 2.0)
    with pytest.raises(DataError):
        PreferencePair("q", "a", "a")


def _corpus(n_tie, n_other):
    pairs = [PreferencePair(f"p{i}", "a", "b", True) for i in range(n_tie)]
    pairs += [PreferencePair(f"o{i}", "a", "b", False) for i in range(n_other)]
    return Corpus(pairs)


class TestResample:
    def test_exact_counts(self):
        out = resample_tie_ratio(_corpus(300, 700), 0.2, seed=1, size=500)
        assert len(out) == 500 and out.n_ties == 100
        assert out.tie_ratio == 0.2

    def test_zero_ratio(self):
        assert resample_tie_ratio(_corpus(300, 700), 0.0, seed=1, size=500).n_ties == 0

    def test_deterministic(self):
        c = _corpus(300, 700)
        assert resample_tie_ratio(c, 0.3, 9, 400).pairs == resample_tie_ratio(c, 0.3, 9, 400).pairs
        assert resample_tie_ratio(c, 0.3, 9, 400).pairs != resample_tie_ratio(c, 0.3, 10, 400).pairs

    def test_default_size_is_largest_feasible(self):
        out = resample_tie_ratio(_corpus(30, 700), 0.1, seed=0)
        assert len(out) == 309 and out.n_ties == 30

    def test_floor_is_robust_to_float_error(self):
        assert resample_tie_ratio(_corpus(300, 700), 0.29, 0, 100).n_ties == 29

    def test_infeasible(self):
        with pytest.raises(DataError):
            resample_tie_ratio(_corpus(10, 700), 0.2, seed=0, size=500)


def _p_same_bin(step, spread=1.0):
    # P(two iid Normal(0, spread^2) draws share a quantization bin)
    k = np.arange(-200, 200)
    cdf = 0.5 * (1 + np.vectorize(math.erf)(np.append(k, k[-1] + 1) * step / (spread * math.sqrt(2))))
    return float((np.diff(cdf) ** 2).sum())


class TestSynthetic:
    def test_tiny_step_no_ties(self):
        assert generate_synthetic(50, 4, 1.0, 0.5, 1e-12, seed=0)[1].tie_ratio == 0.0

    def test_single_bin_all_ties(self):
        assert generate_synthetic(20, 4, 1.0, 0.5, math.inf, seed=0)[1].tie_ratio == 1.0

    def test_tie_ratio_band(self):
        # Monte-Carlo oracle: collision probability of Normal(0,1) pairs on a 0.5 grid
        rng = np.random.default_rng(123)
        r = np.floor(rng.standard_normal((400_000, 2)) / 0.5)
        mc = float((r[:, 0] == r[:, 1]).mean())
        assert mc == pytest.approx(_p_same_bin(0.5), abs=0.003)  # 0.1396
        for seed in range(5):
            _, c = generate_synthetic(200, 4, 1.0, 0.5, 0.5, seed=seed)
            assert len(c) == 1200
            assert 0.10 <= c.tie_ratio <= 0.18

    def test_structure(self):
        world, c = generate_synthetic(3, 4, 2.0, 0.5, 0.5, seed=4)
        assert len(c) == 3 * 6
        for p in c:
            r1, r2 = world.reward(p.prompt_id, p.y1_id), world.reward(p.prompt_id, p.y2_id)
            if p.is_tie:
                assert math.floor(r1 / 0.5) == math.floor(r2 / 0.5) and p.y1_id < p.y2_id
            else:
                assert r1 > r2 and p.score_1 > p.score_2

    def test_tobt_labeling(self):
        world, c = generate_synthetic(100, 4, 1.0, 0.8, 0.5, seed=2, labeling="tobt")
        assert 0.1 < c.tie_ratio < 0.6
        assert all(p.score_1 is None for p in c)

    def test_deterministic(self):
        a = generate_synthetic(10, 4, 1.0, 0.5, 0.5, seed=3)
        b = generate_synthetic(10, 4, 1.0, 0.5, 0.5, seed=3)
        assert a[1].pairs == b[1].pairs and a[0].dumps() == b[0].dumps()

    def test_world_json_roundtrip(self):
        world, _ = generate_synthetic(7, 3, 1.0, 0.5, 0.5, seed=5)
        back = LatentWorld.loads(world.dumps())
        np.testing.assert_array_equal(back.rewards, world.rewards)
        assert back.registry == world.registry and back.seed == 5
        assert {"rewards", "quantization_step", "seed"} <= set(json.loads(world.dumps()))


class TestSplit:
    corpus = generate_synthetic(60, 4, 1.0, 0.5, 0.5, seed=8)[1]

    def test_prompt_level(self):
        train, test = split(self.corpus, 0.2, seed=1, exclude_ties_from_test=True)
        assert not {p.prompt_id for p in train} & {p.prompt_id for p in test}
        assert test.n_ties == 0
        assert len({p.prompt_id for p in test}) == 12

    def test_deterministic(self):
        assert split(self.corpus, 0.2, 1) == split(self.corpus, 0.2, 1)

    def test_tie_free_corpus_flag_irrelevant(self):
        c = Corpus([p for p in self.corpus if not p.is_tie])
        assert split(c, 0.2, 4, True)[1] == split(c, 0.2, 4, False)[1]

    def test_pair_level(self):
        train, test = split(self.corpus, 0.1, seed=2, by="pair")
        assert len(test) == round(0.1 * len(self.corpus)) and test.n_ties == 0
        assert len(train) + len(test) == len(self.corpus)
        assert not set(train.pairs) & set(test.pairs)

    @pytest.mark.parametrize("frac", [0.0, 1.0, 0.001])
    def test_infeasible(self, frac):
        with pytest.raises(DataError):
            split(self.corpus, frac, 0)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6, allow_nan=False), st.floats(-1e6, 1e6, allow_nan=False)),
                min_size=1, max_size=30), st.booleans())
@settings(max_examples=60)
def test_jsonl_roundtrip(tmp_path_factory, scores, quantized):
    step = 0.5 if quantized else None
    from tierank.data import orient, quantize
    pairs = [orient(f"p{i}", "a", "b", quantize(s1, step), quantize(s2, step)) for i, (s1, s2) in enumerate(scores)]
    c = Corpus(pairs)
    path = tmp_path_factory.mktemp("rt") / "c.jsonl"
    emit(c, path)
    back = ingest(path)
    assert back == c
    assert dumps_jsonl(back) == dumps_jsonl(c)
    assert all(p.is_tie or p.score_1 >= p.score_2 for p in back)
    assert back.tie_ratio == sum(p.is_tie for p in pairs) / len(pairs)
