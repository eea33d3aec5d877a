"""Hot numeric kernels, each with a numba-jitted and a pure-numpy implementation.

The batch-reduction kernel (``draw_stats``) uses the jitted path when numba
is installed; set the environment variable ``BCP_DISABLE_NUMBA`` (to anything
but "0") to force the numpy fallback.  numba itself is imported lazily on the
first jitted call, so code paths that never reach it do not pay the import.
``benchmarks/bench_kernels.py`` compares the two backends per kernel.

Kernel pairs are written so that, given identical inputs, they perform the
same scalar operations in the same order.  For the pure-arithmetic kernel
(``pseudo_alphas``) the two backends agree bit for bit; the softmax kernel
(``draw_stats``) agrees to within a few ulp because numpy's vectorized
exp/log and libm may round differently.
"""

from __future__ import annotations

import importlib.util
import math
import os
import warnings

import numpy as np

__all__ = [
    "HAVE_NUMBA",
    "USE_NUMBA",
    "backend",
    "pseudo_alphas",
    "pseudo_alphas_numpy",
    "pseudo_alphas_numba",
    "draw_stats",
    "draw_stats_numpy",
    "draw_stats_numba",
]

_flag = os.environ.get("BCP_DISABLE_NUMBA", "")
_DISABLED = _flag not in ("", "0")

HAVE_NUMBA = importlib.util.find_spec("numba") is not None
USE_NUMBA = HAVE_NUMBA and not _DISABLED

_jitted: dict[str, object] | None = None


def backend() -> str:
    """Backend the batch-reduction kernel will use."""
    return "numba" if USE_NUMBA else "numpy"


def _jitted_impls() -> dict:
    """Decorate the kernel bodies with njit on first use (compilation itself
    is deferred further, to the first call with concrete types)."""
    global _jitted, USE_NUMBA
    if _jitted is None:
        try:
            from numba import njit
        except ImportError as e:  # pragma: no cover - broken installs only
            warnings.warn(f"numba unavailable ({e}); using numpy kernels")
            USE_NUMBA = False
            _jitted = {}
        else:
            _jitted = {
                "pseudo_alphas": njit(cache=True)(_pseudo_alphas_impl),
                "draw_stats": njit(cache=True)(_draw_stats_impl),
            }
    return _jitted


def _jitted_kernel(name: str):
    impls = _jitted_impls()
    if name not in impls:
        raise ImportError("numba is not importable; jitted kernels unavailable")
    return impls[name]


# ---------------------------------------------------------------------------
# leave-one-out pseudo-miscoverages
#
# For each calibration point j with per-label scores s = scores[j]:
#   ratio_y = s_y / ((total - observed_j + s_y) / n)
#   alpha_j = 1 / ratio_(cap_j + 1)   if that order statistic exceeds 1
#           = 1                       otherwise (degenerate: no feasible level)
#
# Dispatch note: numpy's vectorized row sort beats the jitted loop at every
# measured size (see the benchmark), so the dispatcher always takes the numpy
# path here; the jitted variant is kept as a bitwise-identical reference.
# ---------------------------------------------------------------------------


def pseudo_alphas_numpy(scores, observed, total, caps):
    n = scores.shape[0]
    bases = total - observed
    ratios = scores / ((bases[:, None] + scores) / n)
    order_stats = np.sort(ratios, axis=1)
    thresholds = order_stats[np.arange(n), caps]
    alphas = np.ones(n)
    feasible = thresholds > 1.0
    alphas[feasible] = 1.0 / thresholds[feasible]
    return alphas


def _pseudo_alphas_impl(scores, observed, total, caps):
    n, k = scores.shape
    alphas = np.ones(n)
    buf = np.empty(k)
    for j in range(n):
        base = total - observed[j]
        m = caps[j] + 1
        # insertion-select the m smallest ratios into buf[:m] (sorted asc);
        # cheaper than a full per-row sort and yields the same order statistic
        size = 0
        for y in range(k):
            s = scores[j, y]
            r = s / ((base + s) / n)
            if size < m:
                i = size
                while i > 0 and buf[i - 1] > r:
                    buf[i] = buf[i - 1]
                    i -= 1
                buf[i] = r
                size += 1
            elif r < buf[m - 1]:
                i = m - 1
                while i > 0 and buf[i - 1] > r:
                    buf[i] = buf[i - 1]
                    i -= 1
                buf[i] = r
        threshold = buf[m - 1]
        if threshold > 1.0:
            alphas[j] = 1.0 / threshold
    return alphas


def pseudo_alphas_numba(scores, observed, total, caps):
    return _jitted_kernel("pseudo_alphas")(scores, observed, total, caps)


def pseudo_alphas(scores, observed, total: float, caps) -> np.ndarray:
    """Pseudo-miscoverage per calibration point for the given per-point caps."""
    scores = np.ascontiguousarray(scores, dtype=np.float64)
    observed = np.ascontiguousarray(observed, dtype=np.float64)
    caps = np.ascontiguousarray(caps, dtype=np.int64)
    return pseudo_alphas_numpy(scores, observed, float(total), caps)


# ---------------------------------------------------------------------------
# synthetic draw reduction
#
# Input: logits (C, n+1, K) and labels (C, n+1) for C independent draws; the
# last point of each draw is the test point.  The per-point score row is the
# clamped cross entropy of softmax(logits + signal at the drawn label).
# Output per draw: sum of the n observed calibration scores, the K test
# scores and the test label.
# ---------------------------------------------------------------------------


def draw_stats_numpy(logits, labels, signal, clamp):
    c, p, k = logits.shape
    z = logits.copy()
    picked = np.take_along_axis(z, labels[:, :, None], axis=2)
    np.put_along_axis(z, labels[:, :, None], picked + signal, axis=2)
    z -= z.max(axis=2, keepdims=True)
    e = np.exp(z)
    probs = e / np.cumsum(e, axis=2)[:, :, -1:]
    np.clip(probs, clamp, 1.0 - clamp, out=probs)
    all_scores = -np.log(probs)
    observed = np.take_along_axis(
        all_scores[:, : p - 1, :], labels[:, : p - 1, None], axis=2
    )[:, :, 0]
    sums = np.cumsum(observed, axis=1)[:, -1]
    return sums, all_scores[:, -1, :].copy()


def _draw_stats_impl(logits, labels, signal, clamp):
    c, p, k = logits.shape
    sums = np.empty(c)
    test_scores = np.empty((c, k))
    buf = np.empty(k)
    lo = clamp
    hi = 1.0 - clamp
    for m in range(c):
        total = 0.0
        for i in range(p):
            lab = labels[m, i]
            zmax = -np.inf
            for y in range(k):
                v = logits[m, i, y]
                if y == lab:
                    v += signal
                buf[y] = v
                if v > zmax:
                    zmax = v
            denom = 0.0
            for y in range(k):
                ev = math.exp(buf[y] - zmax)
                buf[y] = ev
                denom += ev
            if i == p - 1:
                for y in range(k):
                    prob = buf[y] / denom
                    if prob < lo:
                        prob = lo
                    elif prob > hi:
                        prob = hi
                    test_scores[m, y] = -math.log(prob)
            else:
                prob = buf[lab] / denom
                if prob < lo:
                    prob = lo
                elif prob > hi:
                    prob = hi
                total += -math.log(prob)
        sums[m] = total
    return sums, test_scores


def draw_stats_numba(logits, labels, signal, clamp):
    return _jitted_kernel("draw_stats")(logits, labels, signal, clamp)


def draw_stats(logits, labels, signal: float, clamp: float):
    """Reduce a chunk of synthetic draws to observed-score sums and test scores."""
    logits = np.ascontiguousarray(logits, dtype=np.float64)
    labels = np.ascontiguousarray(labels, dtype=np.int64)
    if USE_NUMBA:
        return draw_stats_numba(logits, labels, float(signal), float(clamp))
    return draw_stats_numpy(logits, labels, float(signal), float(clamp))
