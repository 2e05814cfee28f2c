"""Inner loops shared by the model, trainer and oracle.

Every kernel has a numba implementation (``nb_*``) and a numpy or plain
Python one (``np_*``). The public names bind to one of the two at import
time according to :data:`tierank._accel.USE_NUMBA`. Both variants are kept
importable so tests and the benchmark can compare them in one process.
"""

import math

import numpy as np

from ._accel import USE_NUMBA, njit

# ---------------------------------------------------------------------------
# segmented log-softmax
# ---------------------------------------------------------------------------


@njit
def nb_segment_log_softmax(logits, offsets):
    out = np.empty_like(logits)
    for s in range(offsets.shape[0] - 1):
        lo = offsets[s]
        hi = offsets[s + 1]
        m = logits[lo]
        for j in range(lo + 1, hi):
            if logits[j] > m:
                m = logits[j]
        acc = 0.0
        for j in range(lo, hi):
            acc += math.exp(logits[j] - m)
        lse = m + math.log(acc)
        for j in range(lo, hi):
            out[j] = logits[j] - lse
    return out


def np_segment_log_softmax(logits, offsets):
    starts = offsets[:-1]
    seg = np.repeat(np.arange(starts.shape[0]), np.diff(offsets))
    m = np.maximum.reduceat(logits, starts)
    acc = np.add.reduceat(np.exp(logits - m[seg]), starts)
    return logits - (m + np.log(acc))[seg]


# ---------------------------------------------------------------------------
# pair gradient scatter
#
# For a softmax log-probability, d log pi(y) / d z_j = 1[j == y] - pi(j).
# Each pair adds w1 * grad log pi(y1) + w2 * grad log pi(y2) over the
# candidates of its prompt. Accumulation follows pair order.
# ---------------------------------------------------------------------------


@njit
def nb_accumulate_pair_grads(probs, offsets, seg, y1, y2, w1, w2, out):
    for k in range(seg.shape[0]):
        a = w1[k]
        b = w2[k]
        out[y1[k]] += a
        out[y2[k]] += b
        c = a + b
        if c != 0.0:
            for j in range(offsets[seg[k]], offsets[seg[k] + 1]):
                out[j] -= c * probs[j]
    return out


def np_accumulate_pair_grads(probs, offsets, seg, y1, y2, w1, w2, out):
    np.add.at(out, y1, w1)
    np.add.at(out, y2, w2)
    nseg = offsets.shape[0] - 1
    coef = np.bincount(seg, weights=w1 + w2, minlength=nseg)
    flat_seg = np.repeat(np.arange(nseg), np.diff(offsets))
    out -= coef[flat_seg] * probs
    return out


# ---------------------------------------------------------------------------
# adaptive Simpson for (1/2) sech^2(t)
# ---------------------------------------------------------------------------

_MIN_DEPTH = 8
_MAX_DEPTH = 60


def _half_sech2(t):
    # 0.5 * sech(t)^2 written to stay finite for any t
    e = math.exp(-2.0 * abs(t))
    return 2.0 * e / ((1.0 + e) * (1.0 + e))


_nb_half_sech2 = njit(_half_sech2)


def _make_simpson(f):
    def simpson(a, b, tol):
        """Integrate ``f`` over [a, b]; returns (value, converged)."""
        if b <= a:
            return 0.0, True
        size = 2 * (_MAX_DEPTH + 2)
        sa = np.empty(size)
        sb = np.empty(size)
        sfa = np.empty(size)
        sfm = np.empty(size)
        sfb = np.empty(size)
        swhole = np.empty(size)
        stol = np.empty(size)
        sdepth = np.empty(size, dtype=np.int64)

        fa = f(a)
        fb = f(b)
        fm = f(0.5 * (a + b))
        top = 0
        sa[0] = a
        sb[0] = b
        sfa[0] = fa
        sfm[0] = fm
        sfb[0] = fb
        swhole[0] = (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        stol[0] = tol
        sdepth[0] = 0
        top = 1
        total = 0.0
        ok = True
        while top > 0:
            top -= 1
            a0 = sa[top]
            b0 = sb[top]
            fa0 = sfa[top]
            fm0 = sfm[top]
            fb0 = sfb[top]
            whole = swhole[top]
            tol0 = stol[top]
            depth = sdepth[top]

            m = 0.5 * (a0 + b0)
            lm = 0.5 * (a0 + m)
            rm = 0.5 * (m + b0)
            flm = f(lm)
            frm = f(rm)
            left = (m - a0) / 6.0 * (fa0 + 4.0 * flm + fm0)
            right = (b0 - m) / 6.0 * (fm0 + 4.0 * frm + fb0)
            delta = left + right - whole
            if depth >= _MIN_DEPTH and abs(delta) <= 15.0 * tol0:
                total += left + right + delta / 15.0
                continue
            if depth >= _MAX_DEPTH:
                ok = False
                total += left + right + delta / 15.0
                continue
            # push right then left so the left half is processed first
            sa[top] = m
            sb[top] = b0
            sfa[top] = fm0
            sfm[top] = frm
            sfb[top] = fb0
            swhole[top] = right
            stol[top] = 0.5 * tol0
            sdepth[top] = depth + 1
            top += 1
            sa[top] = a0
            sb[top] = m
            sfa[top] = fa0
            sfm[top] = flm
            sfb[top] = fm0
            swhole[top] = left
            stol[top] = 0.5 * tol0
            sdepth[top] = depth + 1
            top += 1
        return total, ok

    return simpson


py_simpson_half_sech2 = _make_simpson(_half_sech2)
nb_simpson_half_sech2 = njit(_make_simpson(_nb_half_sech2))


if USE_NUMBA:
    segment_log_softmax = nb_segment_log_softmax
    accumulate_pair_grads = nb_accumulate_pair_grads
    simpson_half_sech2 = nb_simpson_half_sech2
else:
    segment_log_softmax = np_segment_log_softmax
    accumulate_pair_grads = np_accumulate_pair_grads
    simpson_half_sech2 = py_simpson_half_sech2

BACKEND = "numba" if USE_NUMBA else "numpy"
