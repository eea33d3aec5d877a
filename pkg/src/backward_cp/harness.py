"""Monte Carlo harness: synthetic score generation, trials, experiments, diagnostics.

A trial draws a calibration set plus one test point, resolves the size cap,
adapts the miscoverage level, builds the capped conformal set and computes
the leave-one-out estimate.  An experiment repeats N trials with trial
randomness that is a pure function of (master_seed, trial_index), then
aggregates coverage, means and histograms in fixed trial order so the
summary is byte-reproducible.
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _jsonfmt, _kernels
from .backward import (
    adaptive_alpha,
    adaptive_alpha_bisect,
    loo_estimator,
    validate_cap,
)
from .bounds import BoundParams, TrustReport, r_delta, trust_decision
from .evalues import loo_ratio_matrix, ordered_sum, test_ratio_vector
from .rules import SizeRule, apply_rule, rule_from_config
from .scores import (
    CalibrationSet,
    EmbeddingMatrix,
    ScoreMatrix,
    cross_entropy_scores,
    load_embeddings_csv,
    load_scores_csv,
)

__all__ = [
    "TrialConfig",
    "TrialRecord",
    "ExperimentSummary",
    "BatchDrawStats",
    "ReferenceEstimates",
    "gen_synthetic_scores",
    "run_trial",
    "run_experiment",
    "posthoc_validity_check",
    "batch_draws",
    "batch_ratio_vectors",
    "batch_true_label_ratios",
    "batch_adaptive_alphas",
    "fixed_alpha_coverage",
    "estimate_reference",
    "stability_diagnostic",
    "write_outputs",
]

HISTOGRAM_BINS = 20

_GENERATOR_KINDS = ("softmax-logit", "csv")


@dataclass(frozen=True)
class TrialConfig:
    """Experiment configuration; mirrors the ``bcp simulate`` JSON config.

    JSON keys: ``n``, ``K``, ``rule``, ``generator``, ``num_trials``,
    ``master_seed``, ``bisect_check`` (optional), ``bound`` (optional) and
    ``tau`` (optional).  ``K`` may be omitted for the csv generator, where the
    pool determines it.
    """

    n: int
    num_labels: int | None
    rule: dict
    generator: dict
    num_trials: int
    master_seed: int
    bisect_check: bool = False
    bound: dict | None = None
    tau: float | None = None

    def __post_init__(self):
        if self.n < 2:
            raise ValueError(f"n must be >= 2, got {self.n}")
        if self.num_trials < 1:
            raise ValueError(f"num_trials must be >= 1, got {self.num_trials}")
        if not isinstance(self.master_seed, int) or self.master_seed < 0:
            raise ValueError("master_seed must be a non-negative integer")
        if not isinstance(self.rule, dict):
            raise ValueError("rule must be a config mapping")
        gen = self.generator
        if not isinstance(gen, dict) or gen.get("kind") not in _GENERATOR_KINDS:
            raise ValueError(
                f"generator.kind must be one of {_GENERATOR_KINDS}"
            )
        if gen["kind"] == "softmax-logit":
            if self.num_labels is None or self.num_labels < 2:
                raise ValueError("softmax-logit generator needs K >= 2")
            signal = gen.get("signal")
            if signal is None or not np.isfinite(signal) or signal < 0:
                raise ValueError("softmax-logit generator needs a signal >= 0")
            extra = set(gen) - {"kind", "signal"}
        else:
            if "score_path" not in gen:
                raise ValueError("csv generator needs a score_path")
            extra = set(gen) - {"kind", "score_path", "embedding_path"}
        if extra:
            raise ValueError(f"unknown generator keys: {sorted(extra)}")
        if self.bound is not None:
            extra = set(self.bound) - {"s_min", "s_max", "delta", "mu"}
            missing = {"s_min", "s_max", "delta"} - set(self.bound)
            if extra or missing:
                raise ValueError(
                    "bound must supply s_min, s_max, delta and optionally mu"
                )
            BoundParams(n=self.n, **self.bound)  # fail fast on bad parameters
        if self.tau is not None and not 0 < self.tau < 1:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")

    @classmethod
    def from_dict(cls, raw: dict) -> "TrialConfig":
        known = {
            "n",
            "K",
            "rule",
            "generator",
            "num_trials",
            "master_seed",
            "bisect_check",
            "bound",
            "tau",
        }
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        missing = {"n", "rule", "generator", "num_trials", "master_seed"} - set(raw)
        if missing:
            raise ValueError(f"missing config keys: {sorted(missing)}")
        return cls(
            n=int(raw["n"]),
            num_labels=None if raw.get("K") is None else int(raw["K"]),
            rule=raw["rule"],
            generator=raw["generator"],
            num_trials=int(raw["num_trials"]),
            master_seed=raw["master_seed"],
            bisect_check=bool(raw.get("bisect_check", False)),
            bound=raw.get("bound"),
            tau=raw.get("tau"),
        )

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "K": self.num_labels,
            "rule": self.rule,
            "generator": self.generator,
            "num_trials": self.num_trials,
            "master_seed": self.master_seed,
            "bisect_check": self.bisect_check,
            "bound": self.bound,
            "tau": self.tau,
        }


@dataclass(frozen=True)
class TrialRecord:
    alpha_tilde: float
    covered: bool
    set_size: int
    cap: int
    alpha_loo: float
    miss_over_alpha: float

    def to_dict(self) -> dict:
        return {
            "alpha_tilde": self.alpha_tilde,
            "covered": self.covered,
            "set_size": self.set_size,
            "cap": self.cap,
            "alpha_loo": self.alpha_loo,
            "miss_over_alpha": self.miss_over_alpha,
        }


@dataclass(frozen=True)
class ExperimentSummary:
    config: TrialConfig
    mean_alpha_tilde: float
    mean_alpha_loo: float
    empirical_coverage: float
    posthoc_ratio_mean: float
    hist_bin_edges: np.ndarray  # (HISTOGRAM_BINS + 1,)
    hist_one_minus_alpha: np.ndarray  # counts
    hist_one_minus_loo: np.ndarray  # counts
    records: list[TrialRecord] = field(repr=False)
    trust: TrustReport | None = None

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "num_trials": self.config.num_trials,
            "mean_alpha_tilde": self.mean_alpha_tilde,
            "mean_alpha_loo": self.mean_alpha_loo,
            "empirical_coverage": self.empirical_coverage,
            "posthoc_ratio_mean": self.posthoc_ratio_mean,
            "histogram": {
                "bin_edges": self.hist_bin_edges,
                "one_minus_alpha_counts": self.hist_one_minus_alpha,
                "one_minus_loo_counts": self.hist_one_minus_loo,
            },
            "trust": None if self.trust is None else self.trust.to_dict(),
            "trials": [r.to_dict() for r in self.records],
        }


def trial_rng(master_seed: int, trial_index: int) -> np.random.Generator:
    """Deterministic per-trial stream: a pure function of both seeds."""
    return np.random.default_rng(np.random.SeedSequence([master_seed, trial_index]))


def gen_synthetic_scores(
    n: int,
    num_labels: int,
    signal: float,
    rng: np.random.Generator,
    clamp: float = 1e-12,
):
    """Draw n calibration points plus one test point from the softmax-logit model.

    For each point: a uniform label, then logits z ~ N(signal * onehot(label), I),
    probabilities softmax(z), scores the clamped cross entropy.  All n+1
    points are i.i.d., hence exchangeable.  Labels are drawn for all points
    first, then all logits, so outputs are bit-reproducible for a given rng
    state.

    Returns ``(calibration_set, test_scores, test_label)``.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if num_labels < 2:
        raise ValueError(f"label count must be >= 2, got {num_labels}")
    if not np.isfinite(signal) or signal < 0:
        raise ValueError(f"signal must be >= 0, got {signal}")
    labels = rng.integers(0, num_labels, size=n + 1)
    z = rng.standard_normal((n + 1, num_labels))
    z[np.arange(n + 1), labels] += signal
    z -= z.max(axis=1, keepdims=True)
    e = np.exp(z)
    probs = e / e.sum(axis=1, keepdims=True)
    scores = cross_entropy_scores(probs, clamp)
    cal = CalibrationSet(ScoreMatrix(scores.values[:n]), labels[:n])
    return cal, scores.values[n].copy(), int(labels[n])


@dataclass(frozen=True)
class _Pool:
    cal: CalibrationSet
    embeddings: EmbeddingMatrix | None


def _load_pool(config: TrialConfig) -> _Pool:
    gen = config.generator
    cal = load_scores_csv(gen["score_path"])
    if cal.n <= config.n:
        raise ValueError(
            f"csv pool has {cal.n} rows; needs more than n={config.n} "
            "(one extra point becomes the test point)"
        )
    if config.num_labels is not None and cal.num_labels != config.num_labels:
        raise ValueError(
            f"config K={config.num_labels} but csv pool has {cal.num_labels} labels"
        )
    embeddings = None
    if gen.get("embedding_path"):
        embeddings = load_embeddings_csv(gen["embedding_path"])
        if embeddings.n != cal.n:
            raise ValueError(
                f"embedding pool has {embeddings.n} rows, score pool has {cal.n}"
            )
    return _Pool(cal=cal, embeddings=embeddings)


def _draw_trial_data(config: TrialConfig, rng, pool: _Pool | None):
    gen = config.generator
    if gen["kind"] == "softmax-logit":
        cal, test_scores, test_label = gen_synthetic_scores(
            config.n, config.num_labels, gen["signal"], rng
        )
        return cal, None, test_scores, test_label, None
    if pool is None:
        pool = _load_pool(config)
    idx = rng.choice(pool.cal.n, size=config.n + 1, replace=False)
    cal_idx, test_idx = idx[: config.n], idx[config.n]
    cal = CalibrationSet(
        ScoreMatrix(pool.cal.scores.values[cal_idx]), pool.cal.labels[cal_idx]
    )
    test_scores = pool.cal.scores.values[test_idx].copy()
    test_label = int(pool.cal.labels[test_idx])
    embeddings = None
    test_embedding = None
    if pool.embeddings is not None:
        embeddings = EmbeddingMatrix(pool.embeddings.points[cal_idx])
        test_embedding = pool.embeddings.points[test_idx].copy()
    return cal, embeddings, test_scores, test_label, test_embedding


def run_trial(
    config: TrialConfig, trial_index: int, pool: _Pool | None = None
) -> TrialRecord:
    """One pass: draw data, resolve the cap, adapt the level, build the set,
    estimate the marginal miscoverage."""
    rng = trial_rng(config.master_seed, trial_index)
    cal, embeddings, test_scores, test_label, test_embedding = _draw_trial_data(
        config, rng, pool
    )
    rule = rule_from_config(config.rule, cal, embeddings)
    cap = apply_rule(rule, cal, test_embedding)
    ratio_vec = test_ratio_vector(cal, test_scores)
    result = adaptive_alpha(ratio_vec, cap)
    if config.bisect_check:
        approx = adaptive_alpha_bisect(ratio_vec, cap)
        if abs(approx - result.alpha) > 0.005:
            raise RuntimeError(
                f"bisection disagrees with closed form: {approx} vs {result.alpha}"
            )
    set_size = int(result.set_indices.size)
    if result.degenerate:
        ok = set_size == int(np.count_nonzero(ratio_vec.ratios < 1.0))
    else:
        ok = set_size <= cap
    if not ok:
        raise RuntimeError(
            f"size-cap invariant violated: set size {set_size}, cap {cap}, "
            f"degenerate={result.degenerate}"
        )
    covered = bool(test_label in result.set_indices)
    loo = loo_estimator(cal, rule, embeddings)
    return TrialRecord(
        alpha_tilde=result.alpha,
        covered=covered,
        set_size=set_size,
        cap=int(cap),
        alpha_loo=loo.alpha_loo,
        miss_over_alpha=(0.0 if covered else 1.0) / result.alpha,
    )


def run_experiment(config: TrialConfig) -> ExperimentSummary:
    """Run all trials and aggregate in fixed trial order."""
    pool = _load_pool(config) if config.generator["kind"] == "csv" else None
    records = [run_trial(config, t, pool) for t in range(config.num_trials)]
    n_trials = len(records)
    alphas = np.array([r.alpha_tilde for r in records])
    loos = np.array([r.alpha_loo for r in records])
    mean_alpha = ordered_sum(alphas) / n_trials
    mean_loo = ordered_sum(loos) / n_trials
    coverage = sum(1 for r in records if r.covered) / n_trials
    posthoc = posthoc_validity_check(records)
    edges = np.linspace(0.0, 1.0, HISTOGRAM_BINS + 1)
    hist_alpha, _ = np.histogram(1.0 - alphas, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    hist_loo, _ = np.histogram(1.0 - loos, bins=HISTOGRAM_BINS, range=(0.0, 1.0))
    trust = None
    if config.bound is not None and config.tau is not None:
        params = BoundParams(n=config.n, **config.bound)
        trust = trust_decision(mean_loo, r_delta(params), config.tau)
    return ExperimentSummary(
        config=config,
        mean_alpha_tilde=mean_alpha,
        mean_alpha_loo=mean_loo,
        empirical_coverage=coverage,
        posthoc_ratio_mean=posthoc,
        hist_bin_edges=edges,
        hist_one_minus_alpha=hist_alpha,
        hist_one_minus_loo=hist_loo,
        records=records,
        trust=trust,
    )


def posthoc_validity_check(records: list[TrialRecord]) -> float:
    """Mean of 1{miss}/alpha over trials; at most ~1 when the guarantee holds."""
    if not records:
        raise ValueError("posthoc check needs at least one trial record")
    values = np.array([r.miss_over_alpha for r in records])
    return ordered_sum(values) / len(records)


# ---------------------------------------------------------------------------
# batched synthetic draws for long-run estimates
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BatchDrawStats:
    """Sufficient statistics of independent draws: per draw, the sum of the n
    observed calibration scores plus the test point's score row and label."""

    n: int
    sum_observed: np.ndarray  # (M,)
    test_scores: np.ndarray  # (M, K)
    test_labels: np.ndarray  # (M,)

    @property
    def draws(self) -> int:
        return self.sum_observed.shape[0]

    @property
    def num_labels(self) -> int:
        return self.test_scores.shape[1]


def batch_draws(
    n: int,
    num_labels: int,
    signal: float,
    draws: int,
    seed: int,
    clamp: float = 1e-12,
) -> BatchDrawStats:
    """Reduce ``draws`` independent synthetic draws to sufficient statistics.

    Works in fixed-size chunks through the selected kernel backend; the
    random stream and chunk policy are pure functions of the arguments.
    """
    if draws < 1:
        raise ValueError(f"draws must be >= 1, got {draws}")
    if n < 1 or num_labels < 2:
        raise ValueError("need n >= 1 and at least 2 labels")
    if not np.isfinite(signal) or signal < 0:
        raise ValueError(f"signal must be >= 0, got {signal}")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    chunk = max(1, 4_000_000 // ((n + 1) * num_labels))
    sums = np.empty(draws)
    test_scores = np.empty((draws, num_labels))
    test_labels = np.empty(draws, dtype=np.int64)
    done = 0
    while done < draws:
        c = min(chunk, draws - done)
        labels = rng.integers(0, num_labels, size=(c, n + 1))
        logits = rng.standard_normal((c, n + 1, num_labels))
        s, ts = _kernels.draw_stats(logits, labels, signal, clamp)
        sums[done : done + c] = s
        test_scores[done : done + c] = ts
        test_labels[done : done + c] = labels[:, n]
        done += c
    return BatchDrawStats(
        n=n, sum_observed=sums, test_scores=test_scores, test_labels=test_labels
    )


def batch_ratio_vectors(stats: BatchDrawStats) -> np.ndarray:
    """Test e-ratio vectors for every draw, as an M x K matrix."""
    s = stats.test_scores
    return s / ((stats.sum_observed[:, None] + s) / (stats.n + 1))


def batch_true_label_ratios(stats: BatchDrawStats) -> np.ndarray:
    """E-ratio at the true test label for every draw (mean 1 in expectation)."""
    idx = np.arange(stats.draws)
    s_true = stats.test_scores[idx, stats.test_labels]
    return s_true / ((stats.sum_observed + s_true) / (stats.n + 1))


def batch_adaptive_alphas(stats: BatchDrawStats, cap: int) -> np.ndarray:
    """Adaptive miscoverage level of every draw under a constant cap."""
    cap = validate_cap(cap, stats.num_labels)
    ratios = batch_ratio_vectors(stats)
    thresholds = np.sort(ratios, axis=1)[:, cap]
    alphas = np.ones(stats.draws)
    feasible = thresholds > 1.0
    alphas[feasible] = 1.0 / thresholds[feasible]
    return alphas


def fixed_alpha_coverage(stats: BatchDrawStats, alpha: float) -> float:
    """Empirical coverage of the fixed-level set {y : E_y < 1/alpha}."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return float(np.mean(batch_true_label_ratios(stats) < 1.0 / alpha))


@dataclass(frozen=True)
class ReferenceEstimates:
    """Long-run Monte Carlo estimates of the mean adaptive level and the mean
    test ratio vector, used as ground truth by rate checks and diagnostics."""

    n: int
    num_labels: int
    cap: int
    signal: float
    draws: int
    mean_alpha: float
    mean_ratios: np.ndarray  # (K,)


def estimate_reference(
    n: int,
    num_labels: int,
    signal: float,
    cap: int,
    draws: int,
    seed: int,
    clamp: float = 1e-12,
) -> ReferenceEstimates:
    stats = batch_draws(n, num_labels, signal, draws, seed, clamp)
    alphas = batch_adaptive_alphas(stats, cap)
    ratios = batch_ratio_vectors(stats)
    return ReferenceEstimates(
        n=n,
        num_labels=num_labels,
        cap=cap,
        signal=float(signal),
        draws=draws,
        mean_alpha=ordered_sum(alphas) / draws,
        mean_ratios=ratios.mean(axis=0),
    )


def stability_diagnostic(
    cal: CalibrationSet,
    rule: SizeRule,
    embeddings: EmbeddingMatrix | None,
    reference: ReferenceEstimates,
) -> float:
    """Empirical stability ratio of the size rule.

    Ratio of the centered pseudo-miscoverage sum to the largest centered
    pseudo-ratio column sum:

        |sum_j (alpha_j - mean_alpha)| / max_y |sum_j (E^j_y - mean_ratio_y)|

    Estimates the Lipschitz-style constant tying level fluctuations to ratio
    fluctuations.  Returns +inf (with a warning) when the denominator is
    below 1e-12; diagnostic only, never raises for degeneracy.
    """
    if reference is None:
        raise ValueError("stability diagnostic requires reference estimates")
    if reference.num_labels != cal.num_labels:
        raise ValueError(
            f"reference has {reference.num_labels} labels, "
            f"calibration set has {cal.num_labels}"
        )
    loo = loo_estimator(cal, rule, embeddings)
    numerator = abs(ordered_sum(loo.per_j - reference.mean_alpha))
    deviations = loo_ratio_matrix(cal) - reference.mean_ratios[None, :]
    column_sums = np.cumsum(deviations, axis=0)[-1, :]
    denominator = float(np.abs(column_sums).max())
    if denominator < 1e-12:
        warnings.warn(
            "stability ratio degenerate: ratio fluctuations below 1e-12",
            stacklevel=2,
        )
        return float("inf")
    return float(numerator / denominator)


# ---------------------------------------------------------------------------
# result files
# ---------------------------------------------------------------------------


def write_outputs(summary: ExperimentSummary, out_dir) -> dict[str, str]:
    """Write summary.json, histogram.csv and trials.csv; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    paths = {
        "summary": os.path.join(out_dir, "summary.json"),
        "histogram": os.path.join(out_dir, "histogram.csv"),
        "trials": os.path.join(out_dir, "trials.csv"),
    }
    with open(paths["summary"], "w", newline="\n", encoding="utf-8") as fh:
        fh.write(_jsonfmt.dumps(summary.to_dict(), indent=2))
        fh.write("\n")
    edges = summary.hist_bin_edges
    with open(paths["histogram"], "w", newline="\n", encoding="utf-8") as fh:
        fh.write("bin_left,bin_right,count_one_minus_alpha,count_one_minus_loo\n")
        for i in range(HISTOGRAM_BINS):
            fh.write(
                f"{format(edges[i], '.17g')},{format(edges[i + 1], '.17g')},"
                f"{int(summary.hist_one_minus_alpha[i])},"
                f"{int(summary.hist_one_minus_loo[i])}\n"
            )
    with open(paths["trials"], "w", newline="\n", encoding="utf-8") as fh:
        fh.write("alpha_tilde,covered,set_size,cap,alpha_loo,miss_over_alpha\n")
        for r in summary.records:
            fh.write(
                f"{format(r.alpha_tilde, '.17g')},{int(r.covered)},{r.set_size},"
                f"{r.cap},{format(r.alpha_loo, '.17g')},"
                f"{format(r.miss_over_alpha, '.17g')}\n"
            )
    return paths
