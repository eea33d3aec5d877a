"""E-value ratio vectors.

For a candidate label y, the test ratio compares the candidate test score to
the average of all n+1 scores (the n observed calibration scores plus the
candidate itself):

    E_y = S_test[y] / ((sum_i S(X_i, Y_i) + S_test[y]) / (n + 1))

The leave-one-out pseudo-ratio for calibration point j plays the same game
with point j promoted to pseudo-test point and the remaining n-1 points as
pseudo-calibration:

    E^j_y = S[j, y] / ((sum_{i != j} S(X_i, Y_i) + S[j, y]) / n)

At the observed label the ratio has expectation 1 under exchangeability,
which is what makes {y : E_y < 1/alpha} a valid conformal set via Markov.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scores import CalibrationSet

__all__ = [
    "RatioVector",
    "ordered_sum",
    "test_ratio_vector",
    "loo_ratio_vector",
    "loo_ratio_matrix",
    "normalized_ratio_vector",
]


def ordered_sum(x: np.ndarray) -> float:
    """Sum in ascending index order (bit-reproducible sequential fold)."""
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        return 0.0
    return float(np.cumsum(x)[-1])


@dataclass(frozen=True)
class RatioVector:
    """K-vector of nonnegative e-ratios for one evaluation point."""

    ratios: np.ndarray
    kind: str  # "test" | "loo" | "normalized"
    index: int | None = None  # leave-one-out point for kind == "loo"

    def __post_init__(self):
        ratios = np.array(self.ratios, dtype=np.float64, copy=True)
        if ratios.ndim != 1:
            raise ValueError("ratio vector must be 1-d")
        if not np.isfinite(ratios).all() or (ratios < 0).any():
            raise ValueError("ratio vector entries must be finite and >= 0")
        ratios.flags.writeable = False
        object.__setattr__(self, "ratios", ratios)

    @property
    def num_labels(self) -> int:
        return self.ratios.shape[0]


def test_ratio_vector(cal: CalibrationSet, test_scores) -> RatioVector:
    """Ratios of candidate test scores to the average of all n+1 scores."""
    s = np.asarray(test_scores, dtype=np.float64)
    if s.ndim != 1 or s.shape[0] != cal.num_labels:
        raise ValueError(
            f"test_scores must be a vector of length {cal.num_labels}"
        )
    if not np.isfinite(s).all() or (s < 0).any():
        raise ValueError("test scores must be finite and >= 0")
    total = ordered_sum(cal.observed_scores)
    denom = (total + s) / (cal.n + 1)
    if (denom <= 0).any():
        raise ValueError(
            "degenerate input: all scores zero for some label, e-ratio undefined"
        )
    return RatioVector(s / denom, kind="test")


def loo_ratio_vector(cal: CalibrationSet, j: int) -> RatioVector:
    """Pseudo-ratios with calibration point j acting as the pseudo-test point."""
    n = cal.n
    if n < 2:
        raise ValueError("leave-one-out ratios need at least 2 calibration points")
    if not 0 <= j < n:
        raise ValueError(f"leave-one-out index {j} out of range [0, {n})")
    row = cal.scores.values[j]
    base = ordered_sum(cal.observed_scores) - cal.observed_scores[j]
    denom = (base + row) / n
    if (denom <= 0).any():
        raise ValueError(
            "degenerate input: all scores zero for some label, e-ratio undefined"
        )
    return RatioVector(row / denom, kind="loo", index=j)


def loo_ratio_matrix(cal: CalibrationSet) -> np.ndarray:
    """All n pseudo-ratio vectors as an n x K matrix.

    Uses one running total of the observed scores, so the whole matrix costs
    O(nK) rather than O(n^2 K).
    """
    n = cal.n
    if n < 2:
        raise ValueError("leave-one-out ratios need at least 2 calibration points")
    observed = cal.observed_scores
    total = ordered_sum(observed)
    bases = total - observed
    values = cal.scores.values
    denom = (bases[:, None] + values) / n
    if (denom <= 0).any():
        raise ValueError(
            "degenerate input: all scores zero for some label, e-ratio undefined"
        )
    return values / denom


def normalized_ratio_vector(point_scores, mu: float) -> RatioVector:
    """Scores divided by a known expected score mu (diagnostic use only).

    The population mean of S(X, Y) is unobservable in applications, so these
    vectors exist for tests and long-run Monte Carlo diagnostics.
    """
    if not np.isfinite(mu) or mu <= 0:
        raise ValueError(f"mu must be a positive real, got {mu}")
    s = np.asarray(point_scores, dtype=np.float64)
    if s.ndim != 1:
        raise ValueError("point_scores must be a 1-d vector")
    return RatioVector(s / mu, kind="normalized")
