"""Compare the numba-jitted kernels against the pure-numpy fallback.

Usage:
    python benchmarks/bench_kernels.py [--quick]

Times the two hot kernels on representative sizes and reports the speedup.
Run again with BCP_DISABLE_NUMBA=1 to confirm which backend the package
itself would pick.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from backward_cp import _kernels


def _time(fn, *args, repeats: int) -> float:
    fn(*args)  # warm-up (and numba compilation)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_pseudo_alphas(n: int, k: int, repeats: int, rng) -> None:
    scores = rng.uniform(0.05, 8.0, size=(n, k))
    labels = rng.integers(0, k, size=n)
    observed = scores[np.arange(n), labels]
    total = float(np.cumsum(observed)[-1])
    caps = rng.integers(1, k, size=n)

    t_np = _time(_kernels.pseudo_alphas_numpy, scores, observed, total, caps,
                 repeats=repeats)
    t_nb = _time(_kernels.pseudo_alphas_numba, scores, observed, total, caps,
                 repeats=repeats)
    a_np = _kernels.pseudo_alphas_numpy(scores, observed, total, caps)
    a_nb = _kernels.pseudo_alphas_numba(scores, observed, total, caps)
    exact = bool(np.array_equal(a_np, a_nb))
    print(
        f"pseudo_alphas   n={n:>5} K={k:<3} "
        f"numpy {t_np * 1e3:8.2f} ms   numba {t_nb * 1e3:8.2f} ms   "
        f"speedup {t_np / t_nb:5.1f}x   bitwise_equal={exact}"
    )


def bench_draw_stats(draws: int, n: int, k: int, repeats: int, rng) -> None:
    logits = rng.standard_normal((draws, n + 1, k))
    labels = rng.integers(0, k, size=(draws, n + 1))

    t_np = _time(_kernels.draw_stats_numpy, logits, labels, 2.0, 1e-12,
                 repeats=repeats)
    t_nb = _time(_kernels.draw_stats_numba, logits, labels, 2.0, 1e-12,
                 repeats=repeats)
    s_np, ts_np = _kernels.draw_stats_numpy(logits, labels, 2.0, 1e-12)
    s_nb, ts_nb = _kernels.draw_stats_numba(logits, labels, 2.0, 1e-12)
    close = bool(
        np.allclose(s_np, s_nb, rtol=1e-12) and np.allclose(ts_np, ts_nb, rtol=1e-12)
    )
    print(
        f"draw_stats      M={draws:>5} n={n:<5} K={k:<3} "
        f"numpy {t_np * 1e3:8.2f} ms   numba {t_nb * 1e3:8.2f} ms   "
        f"speedup {t_np / t_nb:5.1f}x   allclose={close}"
    )


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--quick", action="store_true", help="smaller sizes")
    args = parser.parse_args()

    if not _kernels.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    repeats = 3 if args.quick else 5
    print(
        f"batch-reduction backend: {_kernels.backend()}  "
        "(pseudo_alphas always dispatches to numpy; see the numbers below)"
    )

    if args.quick:
        loo_sizes = [(1000, 10)]
        draw_sizes = [(500, 250, 10)]
    else:
        loo_sizes = [(1000, 10), (5000, 10), (5000, 100)]
        draw_sizes = [(2000, 250, 10), (500, 1000, 10)]

    for n, k in loo_sizes:
        bench_pseudo_alphas(n, k, repeats, rng)
    for draws, n, k in draw_sizes:
        bench_draw_stats(draws, n, k, repeats, rng)


if __name__ == "__main__":
    main()
