"""Size-first conformal prediction core.

Instead of fixing a miscoverage level and accepting whatever set size falls
out, fix a size cap and adapt the level:

    alpha = inf { a in (0,1) : #{y : E_y < 1/a} <= cap }

With the ratios sorted ascending, the count drops to ``cap`` or below exactly
when 1/a <= E_(cap+1), so the infimum has the closed form 1/E_(cap+1) when
that order statistic exceeds 1.  When it does not, no level in (0,1) is
feasible and we adopt the convention alpha = 1 with set {y : E_y < 1}, the
limit of the feasibility region (the post-hoc guarantee then holds
trivially).

The leave-one-out estimator replays the same construction once per
calibration point (point j as pseudo-test, the rest as pseudo-calibration)
and averages the resulting pseudo-miscoverages.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels, rules
from .evalues import RatioVector, ordered_sum
from .scores import CalibrationSet, EmbeddingMatrix

__all__ = [
    "MiscoverageResult",
    "LooEstimate",
    "adaptive_alpha",
    "adaptive_alpha_bisect",
    "conformal_set",
    "loo_estimator",
]


@dataclass(frozen=True)
class MiscoverageResult:
    alpha: float
    set_indices: np.ndarray
    degenerate: bool
    cap: int


@dataclass(frozen=True)
class LooEstimate:
    per_j: np.ndarray
    alpha_loo: float
    per_j_caps: np.ndarray


def _as_ratios(ratios) -> np.ndarray:
    if isinstance(ratios, RatioVector):
        return ratios.ratios
    r = np.asarray(ratios, dtype=np.float64)
    if r.ndim != 1 or r.size == 0:
        raise ValueError("ratio vector must be a non-empty 1-d array")
    if not np.isfinite(r).all() or (r < 0).any():
        raise ValueError("ratio vector entries must be finite and >= 0")
    return r


def validate_cap(cap: int, num_labels: int) -> int:
    cap = int(cap)
    if not 1 <= cap < num_labels:
        raise ValueError(
            f"cap must satisfy 1 <= cap < K (got cap={cap}, K={num_labels})"
        )
    return cap


def adaptive_alpha(ratios, cap: int) -> MiscoverageResult:
    """Smallest miscoverage level whose conformal set has at most ``cap`` labels.

    Closed form over the sorted ratios; ties at the pivotal order statistic
    are harmless because set membership uses a strict inequality.
    """
    r = _as_ratios(ratios)
    cap = validate_cap(cap, r.shape[0])
    threshold = np.sort(r, kind="stable")[cap]
    if threshold > 1.0:
        alpha = 1.0 / threshold
        degenerate = False
        cut = threshold  # exact 1/alpha; re-inverting alpha can round outward
    else:
        alpha = 1.0
        degenerate = True
        cut = 1.0
    members = np.nonzero(r < cut)[0]
    return MiscoverageResult(
        alpha=float(alpha),
        set_indices=members.astype(np.int64),
        degenerate=degenerate,
        cap=cap,
    )


def adaptive_alpha_bisect(ratios, cap: int, tol: float = 0.005) -> float:
    """Binary search for the adaptive level, stopping within ``tol``.

    Keeps an infeasible lower bracket and a feasible upper bracket; the upper
    bracket starts at 1, which is always feasible under the degenerate
    convention.  Retained as an independent cross-check of the closed form.
    """
    r = _as_ratios(ratios)
    cap = validate_cap(cap, r.shape[0])
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.count_nonzero(r < 1.0 / mid) <= cap:
            hi = mid
        else:
            lo = mid
    return hi


def conformal_set(ratios, alpha: float) -> np.ndarray:
    """Labels with e-ratio strictly below 1/alpha, sorted ascending."""
    r = _as_ratios(ratios)
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    return np.nonzero(r < 1.0 / alpha)[0].astype(np.int64)


def loo_estimator(
    cal: CalibrationSet,
    rule: rules.SizeRule,
    embeddings: EmbeddingMatrix | None = None,
) -> LooEstimate:
    """Leave-one-out estimate of the marginal miscoverage.

    Point j's cap comes from the size rule evaluated at point j against the
    remaining calibration points; the mean over j is taken in ascending index
    order for bit-reproducibility.
    """
    n = cal.n
    if n < 2:
        raise ValueError("leave-one-out estimator needs at least 2 calibration points")
    caps = rules.calibration_caps(rule, cal, embeddings)
    bad = np.nonzero((caps < 1) | (caps >= cal.num_labels))[0]
    if bad.size:
        validate_cap(int(caps[bad[0]]), cal.num_labels)
    observed = cal.observed_scores
    total = ordered_sum(observed)
    row_min = cal.scores.values.min(axis=1)
    if ((total - observed) + row_min == 0.0).any():
        raise ValueError(
            "degenerate input: all scores zero for some label, e-ratio undefined"
        )
    per_j = _kernels.pseudo_alphas(cal.scores.values, observed, total, caps)
    return LooEstimate(
        per_j=per_j,
        alpha_loo=ordered_sum(per_j) / n,
        per_j_caps=caps,
    )
