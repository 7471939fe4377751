"""Correlation and distribution analysis linking image measures to the
artist's scores and categories.

Implements exactly the statistics the analysis pipeline needs: Pearson's r
(with two-sided t-test p-values), Spearman's rho, Hoeffding's D (used for
categories whose scores are degenerate), the measures-plus-score
correlation matrix, score banding and per-category histogram bundles.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.stats import rankdata
from scipy.stats import t as t_dist

from .dataset import Specimen
from .errors import DataError, NumericError
from .measures import MEASURE_FIELDS, MeasureRecord

SCORE_LABEL = "score"
CORRELATION_LABELS = MEASURE_FIELDS + (SCORE_LABEL,)
N_SCORE_VALUES = 11  # integer scores 0..10


def _check_pair(x, y, min_n=3):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError(f"series length mismatch: {x.shape} vs {y.shape}")
    if len(x) < min_n:
        raise DataError(f"need at least {min_n} points, got {len(x)}")
    return x, y


def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson r and two-sided p-value (t distribution, n-2 dof)."""
    x, y = _check_pair(x, y)
    xd = x - x.mean()
    yd = y - y.mean()
    denom = np.sqrt((xd @ xd) * (yd @ yd))
    if denom == 0.0:
        raise NumericError("zero variance in a correlation input")
    r = float(np.clip((xd @ yd) / denom, -1.0, 1.0))
    n = len(x)
    if abs(r) == 1.0:
        return r, 0.0
    t = r * np.sqrt((n - 2) / (1.0 - r * r))
    p = float(2.0 * t_dist.sf(abs(t), n - 2))
    return r, p


def spearman(x, y) -> tuple[float, float]:
    """Spearman's rho: Pearson r of average-rank-transformed series."""
    x, y = _check_pair(x, y)
    return pearson(rankdata(x), rankdata(y))


def hoeffding_d(x, y) -> float:
    """Hoeffding's D statistic of dependence, classical x30 scaling
    (range about [-0.5, 1]); ties contribute half/quarter counts."""
    x, y = _check_pair(x, y, min_n=5)
    n = len(x)
    R = rankdata(x)
    S = rankdata(y)
    ux = (x[None, :] < x[:, None]) + 0.5 * (x[None, :] == x[:, None])
    uy = (y[None, :] < y[:, None]) + 0.5 * (y[None, :] == y[:, None])
    # bivariate rank: self-pair contributes 0.25, excluded
    Q = 1.0 + (ux * uy).sum(axis=1) - 0.25
    d1 = np.sum((Q - 1.0) * (Q - 2.0))
    d2 = np.sum((R - 1.0) * (R - 2.0) * (S - 1.0) * (S - 2.0))
    d3 = np.sum((R - 2.0) * (S - 2.0) * (Q - 1.0))
    denom = n * (n - 1) * (n - 2) * (n - 3) * (n - 4)
    return float(30.0 * ((n - 2) * (n - 3) * d1 + d2 - 2 * (n - 2) * d3) / denom)


@dataclass
class CorrelationMatrix:
    labels: tuple[str, ...]
    values: np.ndarray
    p_values: np.ndarray

    def cell(self, a: str, b: str) -> float:
        return float(self.values[self.labels.index(a), self.labels.index(b)])

    def p_value(self, a: str, b: str) -> float:
        return float(self.p_values[self.labels.index(a), self.labels.index(b)])

    def top_score_correlate(self) -> str:
        """Measure label with the largest |r| against the score column."""
        k = self.labels.index(SCORE_LABEL)
        r = np.abs(self.values[:, k]).copy()
        r[k] = -1.0
        return self.labels[int(np.argmax(r))]

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("," + ",".join(self.labels) + "\n")
            for i, label in enumerate(self.labels):
                fh.write(label + "," + ",".join(f"{v:.6f}" for v in self.values[i]) + "\n")

    def as_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "values": self.values.tolist(),
            "p_values": self.p_values.tolist(),
        }


def correlation_table(
    records: Sequence[MeasureRecord], scores: Sequence[float]
) -> CorrelationMatrix:
    """Full symmetric correlation matrix over the seven measures + score."""
    if len(records) != len(scores):
        raise DataError("records and scores must align")
    if len(records) < 3:
        raise DataError("need at least 3 records")
    columns = np.column_stack(
        [np.array([getattr(r, f) for r in records], dtype=np.float64) for f in MEASURE_FIELDS]
        + [np.asarray(scores, dtype=np.float64)]
    )
    k = columns.shape[1]
    values = np.eye(k)
    p_values = np.zeros((k, k))
    for i in range(k):
        for j in range(i + 1, k):
            r, p = pearson(columns[:, i], columns[:, j])
            values[i, j] = values[j, i] = r
            p_values[i, j] = p_values[j, i] = p
    return CorrelationMatrix(CORRELATION_LABELS, values, p_values)


def band_scores(scores, n_bands: int) -> tuple[np.ndarray, np.ndarray]:
    """Map integer scores 0-10 onto n_bands contiguous equal-width bands.

    Returns (band index per score, band edges of length n_bands + 1 on the
    score axis).  n_bands = 11 is the identity banding.
    """
    if n_bands < 2:
        raise DataError(f"n_bands must be >= 2, got {n_bands}")
    s = np.asarray(scores)
    if np.any((s < 0) | (s > 10)):
        raise DataError("scores must lie in [0,10]")
    bands = np.minimum((s * n_bands) // N_SCORE_VALUES, n_bands - 1).astype(int)
    edges = np.arange(n_bands + 1) * N_SCORE_VALUES / n_bands
    return bands, edges


@dataclass
class CategoryHistogram:
    category: str
    count: int
    score_hist: np.ndarray  # 11 counts, scores 0..10
    measure_hist: np.ndarray  # 20 counts over shared measure range
    measure_edges: np.ndarray  # 21 bin edges
    statistic: str  # "spearman" or "hoeffding_d"
    value: float
    p_value: Optional[float]

    def as_dict(self) -> dict:
        return {
            "category": self.category,
            "count": self.count,
            "score_hist": self.score_hist.tolist(),
            "measure_hist": self.measure_hist.tolist(),
            "measure_edges": self.measure_edges.tolist(),
            "statistic": self.statistic,
            "value": self.value,
            "p_value": self.p_value,
        }


def category_histograms(
    specimens: Sequence[Specimen],
    records: dict[str, MeasureRecord],
    measure_name: str,
    n_bins: int = 20,
) -> dict[str, CategoryHistogram]:
    """Per-category score and measure histograms with a dependence test.

    Uses Spearman's rho between score and the named measure within each
    category; when a category's scores are constant (e.g. an all-failures
    class) the test falls back to Hoeffding's D.  Only rated specimens
    with a category and a measure record participate.
    """
    if measure_name not in MEASURE_FIELDS:
        raise DataError(f"unknown measure {measure_name!r}")
    rated = [
        s
        for s in specimens
        if s.evaluation is not None and s.category is not None and s.id in records
    ]
    if not rated:
        return {}
    all_values = np.array([getattr(records[s.id], measure_name) for s in rated])
    lo, hi = float(all_values.min()), float(all_values.max())
    if hi == lo:
        hi = lo + 1.0
    edges = np.linspace(lo, hi, n_bins + 1)
    out: dict[str, CategoryHistogram] = {}
    for category in sorted({s.category for s in rated}):
        members = [s for s in rated if s.category == category]
        scores = np.array([s.score for s in members], dtype=np.float64)
        values = np.array([getattr(records[s.id], measure_name) for s in members])
        score_hist = np.bincount(scores.astype(int), minlength=N_SCORE_VALUES)
        measure_hist = np.histogram(values, bins=edges)[0]
        statistic, value, p = "spearman", float("nan"), None
        if len(members) >= 5 and np.ptp(scores) == 0.0:
            statistic, value = "hoeffding_d", hoeffding_d(values, scores)
        elif len(members) >= 3 and np.ptp(scores) > 0 and np.ptp(values) > 0:
            value, p = spearman(scores, values)
        out[category] = CategoryHistogram(
            category, len(members), score_hist, measure_hist, edges, statistic, value, p
        )
    return out
