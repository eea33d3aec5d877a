"""Calibration data model: score matrices, labels, embeddings and CSV ingestion.

Scores are negatively oriented (lower = better fit) and must be nonnegative;
the cross-entropy constructors clamp probabilities away from {0, 1} so every
score is finite and strictly positive.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import numpy as np

__all__ = [
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

# round-trips every float64 exactly in decimal
FLOAT_FMT = ".17g"


def _frozen_f64(a, ndim: int) -> np.ndarray:
    # copy so freezing never mutates the caller's array flags
    out = np.array(a, dtype=np.float64, order="C", copy=True)
    if out.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got {out.ndim}-d")
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class ScoreMatrix:
    """n x K matrix of nonnegative candidate-label scores."""

    values: np.ndarray

    def __post_init__(self):
        values = _frozen_f64(self.values, 2)
        object.__setattr__(self, "values", values)
        n, k = values.shape
        if n < 1:
            raise ValueError("score matrix needs at least one row")
        if k < 2:
            raise ValueError(f"score matrix needs at least 2 label columns, got {k}")
        if not np.isfinite(values).all():
            raise ValueError("score matrix contains non-finite entries")
        if (values < 0).any():
            raise ValueError("score matrix contains negative entries")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def num_labels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class CalibrationSet:
    """Scores plus the observed label of each calibration point."""

    scores: ScoreMatrix
    labels: np.ndarray

    def __post_init__(self):
        labels = np.array(self.labels, dtype=np.int64, copy=True)
        if labels.ndim != 1:
            raise ValueError("labels must be a 1-d integer array")
        if labels.shape[0] != self.scores.n:
            raise ValueError(
                f"got {labels.shape[0]} labels for {self.scores.n} score rows"
            )
        k = self.scores.num_labels
        if labels.size and (labels.min() < 0 or labels.max() >= k):
            raise ValueError(f"labels must lie in [0, {k})")
        labels.flags.writeable = False
        object.__setattr__(self, "labels", labels)

    @property
    def n(self) -> int:
        return self.scores.n

    @property
    def num_labels(self) -> int:
        return self.scores.num_labels

    @property
    def observed_scores(self) -> np.ndarray:
        """Score of each point at its observed label, S(X_i, Y_i)."""
        return self.scores.values[np.arange(self.n), self.labels]


@dataclass(frozen=True)
class EmbeddingMatrix:
    """n x d feature matrix paired with a calibration set."""

    points: np.ndarray

    def __post_init__(self):
        points = _frozen_f64(self.points, 2)
        if not np.isfinite(points).all():
            raise ValueError("embedding matrix contains non-finite entries")
        object.__setattr__(self, "points", points)

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]


def cross_entropy_scores(probabilities, clamp: float = 1e-12) -> ScoreMatrix:
    """Scores S[i, y] = -ln p[i, y] with p clamped into [clamp, 1-clamp].

    Each probability row must sum to 1 within 1e-6.  Clamping keeps every
    score inside [-ln(1-clamp), -ln(clamp)], so scores are strictly positive
    and bounded.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    if p.ndim != 2:
        raise ValueError("probabilities must be an n x K matrix")
    if not (0.0 < clamp < 0.5):
        raise ValueError(f"clamp must lie in (0, 0.5), got {clamp}")
    if not np.isfinite(p).all():
        raise ValueError("probabilities contain non-finite entries")
    sums = p.sum(axis=1)
    bad = np.nonzero(np.abs(sums - 1.0) > 1e-6)[0]
    if bad.size:
        raise ValueError(
            f"probability row {bad[0]} sums to {sums[bad[0]]!r}, expected 1 within 1e-6"
        )
    return ScoreMatrix(-np.log(np.clip(p, clamp, 1.0 - clamp)))


def binary_cross_entropy_scores(f, clamp: float = 1e-12) -> ScoreMatrix:
    """Two-column scores [-ln(1-f), -ln(f)] for predicted class-1 probabilities f."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 1:
        raise ValueError("f must be a 1-d vector of probabilities")
    if not (0.0 < clamp < 0.5):
        raise ValueError(f"clamp must lie in (0, 0.5), got {clamp}")
    if not np.isfinite(f).all():
        raise ValueError("f contains non-finite entries")
    p = np.stack([1.0 - f, f], axis=1)
    return ScoreMatrix(-np.log(np.clip(p, clamp, 1.0 - clamp)))


def _score_header(k: int) -> list[str]:
    return ["label"] + [f"s{i}" for i in range(k)]


def load_scores_csv(path) -> CalibrationSet:
    """Read a calibration set from CSV with header ``label,s0,...,s{K-1}``.

    One row per calibration point: an integer label followed by K decimal
    scores.  Diagnostics name the offending data row (1-based, header
    excluded).  Decimal parsing is exact nearest-double.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"scores CSV not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"scores CSV {path} is empty") from None
        k = len(header) - 1
        if k < 2:
            raise ValueError(
                f"scores CSV {path}: needs at least 2 score columns, got {k}"
            )
        if header != _score_header(k):
            raise ValueError(
                f"scores CSV {path}: header must be 'label,s0,...,s{k - 1}'"
            )
        labels: list[int] = []
        rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != k + 1:
                raise ValueError(
                    f"scores CSV {path}: row {row_no}: expected {k + 1} fields, got {len(row)}"
                )
            try:
                label = int(row[0])
            except ValueError:
                raise ValueError(
                    f"scores CSV {path}: row {row_no}: malformed label {row[0]!r}"
                ) from None
            if not 0 <= label < k:
                raise ValueError(
                    f"scores CSV {path}: row {row_no}: label {label} out of range [0, {k})"
                )
            try:
                values = [float(v) for v in row[1:]]
            except ValueError:
                raise ValueError(
                    f"scores CSV {path}: row {row_no}: malformed score value"
                ) from None
            for v in values:
                if not np.isfinite(v):
                    raise ValueError(
                        f"scores CSV {path}: row {row_no}: non-finite score {v!r}"
                    )
                if v < 0:
                    raise ValueError(
                        f"scores CSV {path}: row {row_no}: negative score {v!r}"
                    )
            labels.append(label)
            rows.append(values)
    if not rows:
        raise ValueError(f"scores CSV {path}: no data rows")
    return CalibrationSet(ScoreMatrix(np.array(rows)), np.array(labels))


def write_scores_csv(path, cal: CalibrationSet) -> None:
    """Write a calibration set as CSV (LF endings, 17 significant digits)."""
    k = cal.num_labels
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(_score_header(k)) + "\n")
        for label, row in zip(cal.labels, cal.scores.values):
            fields = [str(int(label))] + [format(v, FLOAT_FMT) for v in row]
            fh.write(",".join(fields) + "\n")


def _embedding_header(d: int) -> list[str]:
    return [f"e{i}" for i in range(d)]


def load_embeddings_csv(path) -> EmbeddingMatrix:
    """Read embeddings from CSV with header ``e0,...,e{d-1}``.

    Row order must match the paired score CSV.
    """
    if not os.path.isfile(path):
        raise FileNotFoundError(f"embedding CSV not found: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"embedding CSV {path} is empty") from None
        d = len(header)
        if d < 1 or header != _embedding_header(d):
            raise ValueError(f"embedding CSV {path}: header must be 'e0,...,e{{d-1}}'")
        rows: list[list[float]] = []
        for row_no, row in enumerate(reader, start=1):
            if len(row) != d:
                raise ValueError(
                    f"embedding CSV {path}: row {row_no}: expected {d} fields, got {len(row)}"
                )
            try:
                values = [float(v) for v in row]
            except ValueError:
                raise ValueError(
                    f"embedding CSV {path}: row {row_no}: malformed value"
                ) from None
            rows.append(values)
    if not rows:
        raise ValueError(f"embedding CSV {path}: no data rows")
    return EmbeddingMatrix(np.array(rows))


def write_embeddings_csv(path, emb: EmbeddingMatrix) -> None:
    with open(path, "w", newline="\n", encoding="utf-8") as fh:
        fh.write(",".join(_embedding_header(emb.dim)) + "\n")
        for row in emb.points:
            fh.write(",".join(format(v, FLOAT_FMT) for v in row) + "\n")
