"""Size-constraint rules: a constant cap, or a cap adapted to local label entropy.

The adaptive rule projects embeddings to 2-D with PCA, measures the Shannon
entropy (bits, log2) of the labels among each point's k nearest calibration
neighbors, and maps entropy to a set size through thresholds that are skewed
towards the low-entropy end of the observed range:

    bins_l = minH + (maxH - minH) * ((l-1)/(L-1))**skew,  l = 1..L

    b(h) = t_min + sum_{l=1}^{L-1} 1{h > bins_l}
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scores import CalibrationSet, EmbeddingMatrix

__all__ = [
    "ConstantRule",
    "EntropyModel",
    "EntropyRule",
    "SizeRule",
    "PcaResult",
    "pca_2d",
    "local_entropy",
    "fit_entropy_rule",
    "apply_rule",
    "calibration_caps",
    "rule_from_config",
]


@dataclass(frozen=True)
class ConstantRule:
    """Fixed set-size cap, independent of the data."""

    t: int

    def __post_init__(self):
        if int(self.t) < 1:
            raise ValueError(f"constant size cap must be >= 1, got {self.t}")
        object.__setattr__(self, "t", int(self.t))


@dataclass(frozen=True)
class EntropyModel:
    """Fitted state of the entropy-adaptive rule."""

    projection: np.ndarray  # (2, d) PCA loadings
    mean: np.ndarray  # (d,) centering
    projected_cal: np.ndarray  # (n, 2)
    cal_labels: np.ndarray  # (n,)
    cal_entropies: np.ndarray  # (n,) self-excluded kNN entropies, bits
    num_labels: int
    k: int
    t_min: int
    t_max: int
    bins: np.ndarray  # (L,) non-decreasing entropy thresholds
    skew_exponent: float
    degenerate_projection: bool = False

    @property
    def n(self) -> int:
        return self.projected_cal.shape[0]

    def size_from_entropy(self, h: float) -> int:
        return int(self.t_min + np.count_nonzero(h > self.bins[:-1]))


@dataclass(frozen=True)
class EntropyRule:
    model: EntropyModel


SizeRule = ConstantRule | EntropyRule


@dataclass(frozen=True)
class PcaResult:
    projection: np.ndarray  # (2, d), rows are unit eigenvectors
    mean: np.ndarray  # (d,)
    projected: np.ndarray  # (n, 2)
    degenerate: bool  # all points identical; components zeroed


def pca_2d(embeddings: EmbeddingMatrix) -> PcaResult:
    """Project embeddings onto the top-2 principal axes.

    Sample covariance uses divisor n-1; components are ordered by descending
    eigenvalue and signed so the largest-magnitude loading is positive.  A
    zero covariance matrix (all points identical) yields zero components and
    the degenerate flag.
    """
    pts = embeddings.points
    n, d = pts.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 points")
    if d < 2:
        raise ValueError("PCA projection needs embedding dimension >= 2")
    mean = pts.mean(axis=0)
    centered = pts - mean
    cov = centered.T @ centered / (n - 1)
    if np.all(cov == 0.0):
        return PcaResult(
            projection=np.zeros((2, d)),
            mean=mean,
            projected=np.zeros((n, 2)),
            degenerate=True,
        )
    _, eigvecs = np.linalg.eigh(cov)
    components = np.empty((2, d))
    for row, col in enumerate((d - 1, d - 2)):
        v = eigvecs[:, col]
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        components[row] = v
    return PcaResult(
        projection=components,
        mean=mean,
        projected=centered @ components.T,
        degenerate=False,
    )


def local_entropy(neighbor_labels, num_labels: int) -> float:
    """Shannon entropy (bits) of the empirical label distribution among neighbors."""
    labels = np.asarray(neighbor_labels, dtype=np.int64)
    if labels.ndim != 1 or labels.size == 0:
        raise ValueError("neighbor label list must be non-empty")
    if labels.min() < 0 or labels.max() >= num_labels:
        raise ValueError(f"neighbor labels must lie in [0, {num_labels})")
    p = np.bincount(labels, minlength=num_labels) / labels.size
    nz = p[p > 0]
    return float(-(nz * np.log2(nz)).sum())


def _knn_indices(points: np.ndarray, queries: np.ndarray, k: int, self_query: bool):
    """Indices of the k nearest points per query row.

    Squared Euclidean distances (same ordering as Euclidean); distance ties
    broken by lower point index via stable argsort.  With ``self_query`` the
    queries are the points themselves and each point is excluded from its own
    neighborhood.
    """
    d2 = (
        (queries**2).sum(axis=1)[:, None]
        - 2.0 * queries @ points.T
        + (points**2).sum(axis=1)[None, :]
    )
    if self_query:
        np.fill_diagonal(d2, np.inf)
    order = np.argsort(d2, axis=1, kind="stable")
    return order[:, :k]


def _entropies_for(neigh_labels: np.ndarray, num_labels: int) -> np.ndarray:
    m, k = neigh_labels.shape
    counts = np.zeros((m, num_labels))
    np.add.at(counts, (np.arange(m)[:, None], neigh_labels), 1.0)
    p = counts / k
    logp = np.zeros_like(p)
    np.log2(p, out=logp, where=p > 0)  # zero-count classes contribute 0
    return -(p * logp).sum(axis=1)


def bin_thresholds(min_h: float, max_h: float, L: int, skew_exponent: float):
    grid = (np.arange(L) / (L - 1)) ** skew_exponent
    return min_h + (max_h - min_h) * grid


def fit_entropy_rule(
    cal: CalibrationSet,
    embeddings: EmbeddingMatrix,
    k: int,
    t_min: int,
    t_max: int,
    skew_exponent: float = 0.5,
) -> EntropyModel:
    """Fit the entropy-adaptive rule on a calibration set.

    Each calibration point's entropy uses its k nearest calibration
    neighbors excluding itself, so a point never votes for its own label.
    """
    n = cal.n
    if embeddings.n != n:
        raise ValueError(
            f"embeddings have {embeddings.n} rows but calibration set has {n}"
        )
    if not 1 <= k <= n - 1:
        raise ValueError(f"k must satisfy 1 <= k <= n-1 (got k={k}, n={n})")
    if not (1 <= t_min < t_max <= cal.num_labels):
        raise ValueError(
            f"size bounds must satisfy 1 <= t_min < t_max <= K "
            f"(got t_min={t_min}, t_max={t_max}, K={cal.num_labels})"
        )
    if not np.isfinite(skew_exponent) or skew_exponent <= 0:
        raise ValueError(f"skew_exponent must be positive, got {skew_exponent}")
    pca = pca_2d(embeddings)
    neigh = _knn_indices(pca.projected, pca.projected, k, self_query=True)
    entropies = _entropies_for(cal.labels[neigh], cal.num_labels)
    L = t_max - t_min + 1
    bins = bin_thresholds(entropies.min(), entropies.max(), L, skew_exponent)
    return EntropyModel(
        projection=pca.projection,
        mean=pca.mean,
        projected_cal=pca.projected,
        cal_labels=cal.labels,
        cal_entropies=entropies,
        num_labels=cal.num_labels,
        k=int(k),
        t_min=int(t_min),
        t_max=int(t_max),
        bins=bins,
        skew_exponent=float(skew_exponent),
        degenerate_projection=pca.degenerate,
    )


def test_point_entropy(model: EntropyModel, test_embedding) -> float:
    """Local label entropy of a test point against all calibration neighbors."""
    emb = np.asarray(test_embedding, dtype=np.float64)
    if emb.ndim != 1 or emb.shape[0] != model.mean.shape[0]:
        raise ValueError(
            f"test embedding must be a vector of length {model.mean.shape[0]}"
        )
    q = (emb - model.mean) @ model.projection.T
    neigh = _knn_indices(model.projected_cal, q[None, :], model.k, self_query=False)
    return float(_entropies_for(model.cal_labels[neigh], model.num_labels)[0])


def apply_rule(
    rule: SizeRule,
    cal: CalibrationSet,
    test_embedding=None,
) -> int:
    """Resolve the set-size cap for one test point."""
    if isinstance(rule, ConstantRule):
        return rule.t
    if isinstance(rule, EntropyRule):
        if test_embedding is None:
            raise ValueError("entropy-adaptive rule requires a test embedding")
        model = rule.model
        if model.n != cal.n:
            raise ValueError(
                f"entropy rule was fitted on {model.n} points, "
                f"calibration set has {cal.n}"
            )
        return model.size_from_entropy(test_point_entropy(model, test_embedding))
    raise TypeError(f"unknown size rule {rule!r}")


def calibration_caps(
    rule: SizeRule,
    cal: CalibrationSet,
    embeddings: EmbeddingMatrix | None = None,
) -> np.ndarray:
    """Per-point caps for the leave-one-out pseudo-test points.

    The entropy rule reuses the full-calibration fit: point j's entropy was
    already computed against the other calibration points (self excluded), so
    its pseudo-cap is the binned value of that stored entropy.  Refitting the
    model n times would cost O(n^2 d^2) and change nothing downstream.
    """
    if isinstance(rule, ConstantRule):
        return np.full(cal.n, rule.t, dtype=np.int64)
    if isinstance(rule, EntropyRule):
        if embeddings is None:
            raise ValueError("entropy-adaptive rule requires embeddings")
        model = rule.model
        if embeddings.n != cal.n:
            raise ValueError(
                f"embeddings have {embeddings.n} rows but calibration set has {cal.n}"
            )
        if model.n != cal.n:
            raise ValueError(
                f"entropy rule was fitted on {model.n} points, "
                f"calibration set has {cal.n}"
            )
        caps = model.t_min + (
            model.cal_entropies[:, None] > model.bins[None, :-1]
        ).sum(axis=1)
        return caps.astype(np.int64)
    raise TypeError(f"unknown size rule {rule!r}")


def rule_from_config(
    config: dict,
    cal: CalibrationSet | None = None,
    embeddings: EmbeddingMatrix | None = None,
) -> SizeRule:
    """Build a size rule from a config mapping.

    ``{"kind": "constant", "t": 1}`` or
    ``{"kind": "entropy", "k": 20, "t_min": 1, "t_max": 3, "skew_exponent": 0.5}``
    (the exponent is optional and defaults to 0.5).  The entropy kind is
    fitted on the supplied calibration set and embeddings.
    """
    if not isinstance(config, dict) or "kind" not in config:
        raise ValueError("rule config must be a mapping with a 'kind' key")
    kind = config["kind"]
    if kind == "constant":
        extra = set(config) - {"kind", "t"}
        if extra or "t" not in config:
            raise ValueError("constant rule config must be {'kind': 'constant', 't': <int>}")
        return ConstantRule(t=int(config["t"]))
    if kind == "entropy":
        allowed = {"kind", "k", "t_min", "t_max", "skew_exponent"}
        extra = set(config) - allowed
        missing = {"k", "t_min", "t_max"} - set(config)
        if extra or missing:
            raise ValueError(
                "entropy rule config must be {'kind': 'entropy', 'k', 't_min', "
                "'t_max'[, 'skew_exponent']}"
            )
        if cal is None or embeddings is None:
            raise ValueError(
                "entropy rule requires a calibration set and embeddings to fit"
            )
        model = fit_entropy_rule(
            cal,
            embeddings,
            k=int(config["k"]),
            t_min=int(config["t_min"]),
            t_max=int(config["t_max"]),
            skew_exponent=float(config.get("skew_exponent", 0.5)),
        )
        return EntropyRule(model=model)
    raise ValueError(f"unknown rule kind {kind!r}")
