"""Size-first conformal prediction.

Fix how large prediction sets may be, let the miscoverage level adapt, and
estimate the resulting marginal miscoverage from the calibration set alone
via a leave-one-out construction, with explicit finite-sample trust bounds
and a Monte Carlo harness that verifies the guarantees empirically.
"""

from ._kernels import backend
from .backward import (
    LooEstimate,
    MiscoverageResult,
    adaptive_alpha,
    adaptive_alpha_bisect,
    conformal_set,
    loo_estimator,
)
from .bounds import (
    BoundParams,
    TrustReport,
    empirical_score_range,
    explicit_bound_with_mu,
    r_delta,
    trust_decision,
)
from .evalues import (
    RatioVector,
    loo_ratio_matrix,
    loo_ratio_vector,
    normalized_ratio_vector,
    test_ratio_vector,
)
from .harness import (
    ExperimentSummary,
    ReferenceEstimates,
    TrialConfig,
    TrialRecord,
    estimate_reference,
    gen_synthetic_scores,
    posthoc_validity_check,
    run_experiment,
    run_trial,
    stability_diagnostic,
    write_outputs,
)
from .rules import (
    ConstantRule,
    EntropyModel,
    EntropyRule,
    SizeRule,
    apply_rule,
    fit_entropy_rule,
    local_entropy,
    pca_2d,
    rule_from_config,
)
from .scores import (
    CalibrationSet,
    EmbeddingMatrix,
    ScoreMatrix,
    binary_cross_entropy_scores,
    cross_entropy_scores,
    load_embeddings_csv,
    load_scores_csv,
    write_embeddings_csv,
    write_scores_csv,
)

__version__ = "0.1.0"

__all__ = [
    "backend",
    "MiscoverageResult",
    "LooEstimate",
    "adaptive_alpha",
    "adaptive_alpha_bisect",
    "conformal_set",
    "loo_estimator",
    "BoundParams",
    "TrustReport",
    "r_delta",
    "explicit_bound_with_mu",
    "trust_decision",
    "empirical_score_range",
    "RatioVector",
    "test_ratio_vector",
    "loo_ratio_vector",
    "loo_ratio_matrix",
    "normalized_ratio_vector",
    "TrialConfig",
    "TrialRecord",
    "ExperimentSummary",
    "ReferenceEstimates",
    "gen_synthetic_scores",
    "run_trial",
    "run_experiment",
    "posthoc_validity_check",
    "estimate_reference",
    "stability_diagnostic",
    "write_outputs",
    "ConstantRule",
    "EntropyRule",
    "EntropyModel",
    "SizeRule",
    "pca_2d",
    "local_entropy",
    "fit_entropy_rule",
    "apply_rule",
    "rule_from_config",
    "ScoreMatrix",
    "CalibrationSet",
    "EmbeddingMatrix",
    "cross_entropy_scores",
    "binary_cross_entropy_scores",
    "load_scores_csv",
    "write_scores_csv",
    "load_embeddings_csv",
    "write_embeddings_csv",
]
