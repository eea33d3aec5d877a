"""Finite-sample error bounds for the leave-one-out miscoverage estimate.

With scores confined to [s_min, s_max] (0 < s_min) and n > s_max/s_min
calibration points, the estimation error |alpha_loo - E[alpha]| is, with
probability at least 1 - delta, at most

    s_max * (sqrt(ln(4/delta)/(2n)) + 2/n) / (mu * (s_min/s_max - 1/n))
      + sqrt(ln(4/delta)/(2n))
      + (2 s_max^2 / (mu s_min)) * ((n+1)/n) * sqrt(pi / (2(n+1)))

where mu is the expected observed score.  Since mu >= s_min, replacing mu by
s_min majorizes the expression by an observable quantity R_delta(n) and
yields the decision rule: trust the conformal set when
1 - alpha_loo - R_delta(n) >= tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scores import CalibrationSet

__all__ = [
    "BoundParams",
    "TrustReport",
    "r_delta",
    "explicit_bound_with_mu",
    "trust_decision",
    "empirical_score_range",
    "TAYLOR_CAVEAT",
]

# The bound is meaningful jointly with the first-order approximation behind
# the marginal coverage statement; it is surfaced with every report rather
# than asserted unconditionally.
TAYLOR_CAVEAT = (
    "lower_coverage assumes the marginal coverage guarantee, which holds up "
    "to a first-order Taylor approximation of the post-hoc validity bound"
)


@dataclass(frozen=True)
class BoundParams:
    n: int
    s_min: float
    s_max: float
    delta: float
    mu: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.s_min) and math.isfinite(self.s_max)):
            raise ValueError("score bounds must be finite")
        if not 0 < self.s_min <= self.s_max:
            raise ValueError(
                f"score bounds must satisfy 0 < s_min <= s_max "
                f"(got s_min={self.s_min}, s_max={self.s_max})"
            )
        if not 0 < self.delta < 1:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.n <= self.s_max / self.s_min:
            raise ValueError(
                f"n must exceed s_max/s_min (got n={self.n} <= "
                f"{self.s_max / self.s_min})"
            )
        if self.mu is not None and not (math.isfinite(self.mu) and self.mu > 0):
            raise ValueError(f"mu must be a positive real, got {self.mu}")


def _bound_value(n: int, s_min: float, s_max: float, delta: float, mu: float) -> float:
    root = math.sqrt(math.log(4.0 / delta) / (2.0 * n))
    deviation = s_max * (root + 2.0 / n) / (mu * (s_min / s_max - 1.0 / n))
    gaussian_tail = (
        (2.0 * s_max * s_max / (mu * s_min))
        * ((n + 1.0) / n)
        * math.sqrt(math.pi / (2.0 * (n + 1.0)))
    )
    return deviation + root + gaussian_tail


def r_delta(params: BoundParams) -> float:
    """Observable error bound R_delta(n): the mu-dependent bound at mu = s_min."""
    return _bound_value(params.n, params.s_min, params.s_max, params.delta, params.s_min)


def explicit_bound_with_mu(params: BoundParams) -> float:
    """Error bound using a known expected score mu; tighter than R_delta."""
    if params.mu is None:
        raise ValueError("explicit bound requires mu")
    return _bound_value(params.n, params.s_min, params.s_max, params.delta, params.mu)


@dataclass(frozen=True)
class TrustReport:
    alpha_loo: float
    r_delta: float
    tau: float
    lower_coverage: float
    decision: str  # "trust" | "reject"

    def to_dict(self) -> dict:
        return {
            "alpha_loo": self.alpha_loo,
            "r_delta": self.r_delta,
            "tau": self.tau,
            "lower_coverage": self.lower_coverage,
            "decision": self.decision,
            "caveat": TAYLOR_CAVEAT,
        }


def trust_decision(alpha_loo: float, r: float, tau: float) -> TrustReport:
    """Trust the conformal set iff 1 - alpha_loo - r >= tau (inclusive)."""
    for name, value in (("alpha_loo", alpha_loo), ("r", r), ("tau", tau)):
        if not math.isfinite(value):
            raise ValueError(f"{name} must be finite, got {value}")
    if not 0 < tau < 1:
        raise ValueError(f"tau must lie in (0, 1), got {tau}")
    # grouped so decimal inputs land exactly on decimal boundaries
    lower = 1.0 - (alpha_loo + r)
    return TrustReport(
        alpha_loo=alpha_loo,
        r_delta=r,
        tau=tau,
        lower_coverage=lower,
        decision="trust" if lower >= tau else "reject",
    )


def empirical_score_range(cal: CalibrationSet) -> tuple[float, float]:
    """Observed min/max calibration score, a starting point for (s_min, s_max).

    The bound needs the true range of the score function; with clamped
    cross-entropy scores the theoretical minimum is vacuously tiny, so these
    constants are normally supplied by the user instead.
    """
    observed = cal.observed_scores
    return float(observed.min()), float(observed.max())
