"""Numba vs numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Kernels are swapped in-process, so numba must be importable. Numba timings
exclude compilation (a warm-up call runs first).
"""

import argparse
import contextlib
import time

import numpy as np

from tierank import _accel, kernels
from tierank.data import generate_synthetic
from tierank.evaluate import compare
from tierank.trainer import TrainConfig

BACKENDS = {
    "numba": (kernels.nb_segment_log_softmax, kernels.nb_accumulate_pair_grads, kernels.nb_simpson_half_sech2),
    "numpy": (kernels.np_segment_log_softmax, kernels.np_accumulate_pair_grads, kernels.py_simpson_half_sech2),
}


@contextlib.contextmanager
def use_backend(name):
    saved = kernels.segment_log_softmax, kernels.accumulate_pair_grads, kernels.simpson_half_sech2
    kernels.segment_log_softmax, kernels.accumulate_pair_grads, kernels.simpson_half_sech2 = BACKENDS[name]
    try:
        yield
    finally:
        kernels.segment_log_softmax, kernels.accumulate_pair_grads, kernels.simpson_half_sech2 = saved


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    sizes = rng.integers(2, 9, 20_000)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    logits = rng.normal(size=offsets[-1])
    probs = np.exp(kernels.np_segment_log_softmax(logits, offsets))
    n = 64
    seg = rng.integers(0, len(sizes), n)
    y1 = offsets[seg]
    y2 = offsets[seg] + 1
    w1 = rng.normal(size=n)
    out = np.zeros_like(logits)

    world, corpus = generate_synthetic(200, 8, 1.0, 0.5, 0.5, seed=7)
    cfg = TrainConfig(epochs=3, batch_size=64)

    return {
        "segment_log_softmax (20k prompts)": lambda b: BACKENDS[b][0](logits, offsets),
        "accumulate_pair_grads (batch 64)": lambda b: BACKENDS[b][1](probs, offsets, seg, y1, y2, w1, -w1, out),
        "adaptive simpson [-10, 10]": lambda b: BACKENDS[b][2](-10.0, 10.0, 1e-10),
        "compare, 1 ratio x 2 methods x 1 seed": lambda b: compare(world, corpus, [0.2], ["dpo", "todo"], [0], cfg,
                                                                   train_size=2000),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<40} {'numba':>11} {'numpy':>11} {'speedup':>8}")
    for name, fn in cases(rng).items():
        t = {}
        for b in ("numba", "numpy"):
            with use_backend(b):
                t[b] = best_of(lambda: fn(b), args.repeat)
        print(f"{name:<40} {t['numba'] * 1e3:>9.3f}ms {t['numpy'] * 1e3:>9.3f}ms {t['numpy'] / t['numba']:>7.1f}x")


if __name__ == "__main__":
    main()
