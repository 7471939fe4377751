"""Genotype-side prediction: a tabular MLP and a k-NN baseline mapping
12-d genotypes to categories or scores.

Both predictors see genotypes normalized per-dimension to [0, 1] by the
training split's min-max bounds.  The benchmark report puts the two side
by side, sweeping k for the baseline.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset, Specimen, genotype_matrix
from .errors import DataError
from .features import Prediction
from .learn import (
    MlpSpec,
    PredictorModel,
    TrainSchedule,
    expectation_decode,
    most_confused_pairs,
    train,
)

GENOTYPE_DIM = 12
N_SCORE_CLASSES = 11

DEFAULT_HIDDEN = (200, 100)
# grid-searched over epochs x lr on held-out synthetic rules; recorded in
# every saved model header via the schedule field
DEFAULT_SCHEDULE = ((24, 0.1), (24, 0.01))
KNN_SWEEP = (1, 3, 5, 7)


@dataclass(frozen=True)
class TabularConfig:
    hidden: tuple[int, ...] = DEFAULT_HIDDEN
    schedule_phases: tuple = DEFAULT_SCHEDULE
    batch_size: int = 64
    seed: int = 0


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5
    weighting: str = "uniform"  # or "inverse_distance"

    def __post_init__(self):
        if self.k < 1:
            raise DataError(f"k must be >= 1, got {self.k}")
        if self.weighting not in ("uniform", "inverse_distance"):
            raise DataError(f"unknown weighting {self.weighting!r}")


def _rated(specimens: Sequence[Specimen], target: str) -> list[Specimen]:
    if target == "category":
        return [s for s in specimens if s.category is not None]
    return [s for s in specimens if s.evaluation is not None]


def _train_bounds(specimens: Sequence[Specimen]) -> np.ndarray:
    X = genotype_matrix(specimens)
    return np.stack([X.min(axis=0), X.max(axis=0)], axis=1)


def _normalize(X: np.ndarray, bounds: np.ndarray) -> np.ndarray:
    lo = bounds[:, 0]
    span = np.where(bounds[:, 1] > lo, bounds[:, 1] - lo, 1.0)
    return (X - lo) / span


def train_tabular(
    ds: Dataset, config: TabularConfig = TabularConfig(), target: str = "category"
) -> PredictorModel:
    """Train the tabular MLP on the dataset's train split."""
    if target not in ("category", "score"):
        raise DataError(f"unknown target {target!r}")
    train_specimens = _rated(ds.subset("train"), target)
    val_specimens = _rated(ds.subset("validation"), target)
    if not train_specimens:
        raise DataError("no rated specimens in the training split")
    bounds = _train_bounds(train_specimens)
    X_train = _normalize(genotype_matrix(train_specimens), bounds)
    X_val = _normalize(genotype_matrix(val_specimens), bounds)
    if target == "category":
        labels = sorted({s.category for s in train_specimens})
        label_idx = {c: i for i, c in enumerate(labels)}
        y_train = np.array([label_idx[s.category] for s in train_specimens])
        # validation categories unseen in training cannot be predicted;
        # they still count as errors in the report
        y_val = np.array([label_idx.get(s.category, -1) for s in val_specimens])
        keep = y_val >= 0
        X_val, y_val = X_val[keep], y_val[keep]
        n_out = len(labels)
    else:
        labels = [str(i) for i in range(N_SCORE_CLASSES)]
        y_train = np.array([s.score for s in train_specimens])
        y_val = np.array([s.score for s in val_specimens])
        n_out = N_SCORE_CLASSES
    spec = MlpSpec(GENOTYPE_DIM, config.hidden, n_out)
    schedule = TrainSchedule(
        phases=config.schedule_phases, batch_size=config.batch_size, seed=config.seed
    )
    val_set = (X_val, y_val) if len(X_val) else None
    params, reports = train(spec, schedule, (X_train, y_train), val_set)
    metrics = {}
    if reports:
        metrics = {"accuracy": reports[-1].accuracy, "rmse": reports[-1].rmse}
        if target == "category":
            metrics["most_confused"] = [
                [list(pair), count]
                for pair, count in most_confused_pairs(reports[-1].confusion, labels)
            ]
    return PredictorModel(spec, params, labels, target, schedule, bounds, metrics)


def _neighbor_order(dists: np.ndarray, k: int) -> np.ndarray:
    return np.argsort(dists, kind="stable")[:k]


def knn_predict(
    train_specimens: Sequence[Specimen],
    query,
    cfg: KnnConfig = KnnConfig(),
    target: str = "category",
    bounds: Optional[np.ndarray] = None,
):
    """k-NN over normalized genotypes: majority vote for categories (ties
    by smaller mean distance, then label order) or mean score.

    Returns a Prediction for the category target, a float for score.
    """
    train_specimens = _rated(list(train_specimens), target)
    if not train_specimens:
        raise DataError("empty training set")
    if cfg.k > len(train_specimens):
        raise DataError(f"k={cfg.k} exceeds training set size {len(train_specimens)}")
    if bounds is None:
        bounds = _train_bounds(train_specimens)
    X = _normalize(genotype_matrix(train_specimens), bounds)
    q = _normalize(np.asarray(query, dtype=np.float64)[None, :], bounds)[0]
    dists = np.sqrt(((X - q) ** 2).sum(axis=1))
    nearest = _neighbor_order(dists, cfg.k)
    if cfg.weighting == "inverse_distance":
        weights = 1.0 / np.maximum(dists[nearest], 1e-12)
    else:
        weights = np.ones(len(nearest))
    if target == "score":
        scores = np.array([train_specimens[i].score for i in nearest], dtype=np.float64)
        return float(np.average(scores, weights=weights))
    labels = sorted({s.category for s in train_specimens})
    votes = {c: 0.0 for c in labels}
    dist_sum: dict[str, list[float]] = {c: [] for c in labels}
    for idx, w in zip(nearest, weights):
        c = train_specimens[idx].category
        votes[c] += w
        dist_sum[c].append(dists[idx])
    total = sum(votes.values())
    # winner: most votes, then smaller mean neighbor distance, then label order
    winner = min(
        labels,
        key=lambda c: (
            -votes[c],
            np.mean(dist_sum[c]) if dist_sum[c] else np.inf,
            c,
        ),
    )
    dist_vec = np.array([votes[c] / total for c in labels])
    top2 = np.sort(dist_vec)[::-1]
    confidence = float(top2[0] - top2[1]) if len(labels) > 1 else 1.0
    return Prediction(
        labels=tuple(labels),
        distribution=dist_vec,
        predicted=winner,
        confidence=confidence,
    )


def knn_evaluate(
    train_specimens: Sequence[Specimen],
    val_specimens: Sequence[Specimen],
    cfg: KnnConfig,
    target: str,
) -> float:
    """Accuracy (category) or RMSE (score) of k-NN over a validation split.

    Batched: one (n_val, n_train) distance matrix, then the same vote and
    tie-break rules as knn_predict.
    """
    train_specimens = _rated(list(train_specimens), target)
    val_specimens = _rated(list(val_specimens), target)
    if not train_specimens:
        raise DataError("empty training set")
    if not val_specimens:
        raise DataError("empty validation split")
    if cfg.k > len(train_specimens):
        raise DataError(f"k={cfg.k} exceeds training set size {len(train_specimens)}")
    bounds = _train_bounds(train_specimens)
    X = _normalize(genotype_matrix(train_specimens), bounds)
    Q = _normalize(genotype_matrix(val_specimens), bounds)
    dists = np.sqrt(
        np.maximum(
            (Q * Q).sum(axis=1)[:, None] + (X * X).sum(axis=1)[None, :] - 2.0 * Q @ X.T,
            0.0,
        )
    )
    nearest = np.argsort(dists, axis=1, kind="stable")[:, : cfg.k]
    if target == "score":
        scores = np.array([s.score for s in train_specimens], dtype=np.float64)
        neighbor_scores = scores[nearest]
        if cfg.weighting == "inverse_distance":
            w = 1.0 / np.maximum(np.take_along_axis(dists, nearest, axis=1), 1e-12)
            pred = (neighbor_scores * w).sum(axis=1) / w.sum(axis=1)
        else:
            pred = neighbor_scores.mean(axis=1)
        truth = np.array([s.score for s in val_specimens], dtype=np.float64)
        return float(np.sqrt(np.mean((pred - truth) ** 2)))
    labels = sorted({s.category for s in train_specimens})
    label_idx = {c: i for i, c in enumerate(labels)}
    cats = np.array([label_idx[s.category] for s in train_specimens])
    hits = []
    for row, d_row in zip(nearest, dists):
        votes = np.zeros(len(labels))
        if cfg.weighting == "inverse_distance":
            weights = 1.0 / np.maximum(d_row[row], 1e-12)
        else:
            weights = np.ones(len(row))
        np.add.at(votes, cats[row], weights)
        mean_d = np.full(len(labels), np.inf)
        for c in set(cats[row]):
            mean_d[c] = d_row[row[cats[row] == c]].mean()
        winner = min(
            range(len(labels)), key=lambda c: (-votes[c], mean_d[c], labels[c])
        )
        hits.append(winner)
    truth = np.array([label_idx.get(s.category, -1) for s in val_specimens])
    return float(np.mean(np.array(hits) == truth))


def predict_tabular(model: PredictorModel, genotype) -> Prediction:
    """Prediction from a trained tabular model for one genotype."""
    x = np.asarray(genotype, dtype=np.float64)
    if x.shape != (GENOTYPE_DIM,):
        raise DataError(f"genotype shape {x.shape} != ({GENOTYPE_DIM},)")
    dist = model.predict_proba(x)
    top = int(dist.argmax())
    expected = float(expectation_decode(dist)) if model.target == "score" else None
    top2 = np.sort(dist)[::-1]
    return Prediction(
        labels=tuple(model.labels),
        distribution=dist,
        predicted=model.labels[top],
        confidence=float(top2[0] - top2[1]) if len(dist) > 1 else 1.0,
        expected_score=expected,
    )


def _config_hash(payload: dict) -> str:
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:12]


def compare_predictors(
    ds: Dataset,
    config: TabularConfig = TabularConfig(),
    knn_sweep: Sequence[int] = KNN_SWEEP,
) -> dict:
    """Side-by-side benchmark of the tabular MLP against k-NN on the
    dataset's train/validation split; k is swept and the best k reported."""
    tab_cat = train_tabular(ds, config, "category")
    tab_score = train_tabular(ds, config, "score")
    train_specimens = ds.subset("train")
    val_specimens = ds.subset("validation")
    knn_acc = {}
    knn_rmse = {}
    for k in knn_sweep:
        cfg = KnnConfig(k=k)
        knn_acc[k] = knn_evaluate(train_specimens, val_specimens, cfg, "category")
        knn_rmse[k] = knn_evaluate(train_specimens, val_specimens, cfg, "score")
    best_k_acc = max(knn_acc, key=lambda k: knn_acc[k])
    best_k_rmse = min(knn_rmse, key=lambda k: knn_rmse[k])
    report = {
        "config_hash": _config_hash(
            {
                "hidden": list(config.hidden),
                "schedule": [list(p) for p in config.schedule_phases],
                "batch_size": config.batch_size,
                "seed": config.seed,
                "knn_sweep": list(knn_sweep),
            }
        ),
        "tabular": {
            "category_accuracy": tab_cat.metrics.get("accuracy"),
            "score_rmse": tab_score.metrics.get("rmse"),
            # informational: elevated pairs are expected, never hard-asserted
            "most_confused": tab_cat.metrics.get("most_confused", []),
        },
        "knn": {
            "category_accuracy_by_k": knn_acc,
            "score_rmse_by_k": knn_rmse,
            "best_k_accuracy": best_k_acc,
            "best_k_rmse": best_k_rmse,
            "category_accuracy": knn_acc[best_k_acc],
            "score_rmse": knn_rmse[best_k_rmse],
        },
    }
    report["tabular_beats_knn_accuracy"] = (
        report["tabular"]["category_accuracy"] > report["knn"]["category_accuracy"]
    )
    report["tabular_beats_knn_rmse"] = (
        report["tabular"]["score_rmse"] < report["knn"]["score_rmse"]
    )
    return report


def report_rows(report: dict) -> list[dict]:
    """Flatten a benchmark report into (predictor, target, metric, value,
    config_hash) rows for CSV export."""
    h = report["config_hash"]
    rows = [
        {
            "predictor": "tabular",
            "target": "category",
            "metric": "accuracy",
            "value": report["tabular"]["category_accuracy"],
            "config_hash": h,
        },
        {
            "predictor": "tabular",
            "target": "score",
            "metric": "rmse",
            "value": report["tabular"]["score_rmse"],
            "config_hash": h,
        },
    ]
    for k, acc in report["knn"]["category_accuracy_by_k"].items():
        rows.append(
            {
                "predictor": f"knn_k{k}",
                "target": "category",
                "metric": "accuracy",
                "value": acc,
                "config_hash": h,
            }
        )
    for k, rmse in report["knn"]["score_rmse_by_k"].items():
        rows.append(
            {
                "predictor": f"knn_k{k}",
                "target": "score",
                "metric": "rmse",
                "value": rmse,
                "config_hash": h,
            }
        )
    return rows
