"""Phenotype-side prediction from precomputed 2048-d feature vectors.

Feature vectors come from an out-of-process pretrained extractor via a
sidecar file (binary "FVEC" or CSV); heads are single affine + softmax
layers trained with the shared kernel.  Confidence is the margin between
the top two predicted probabilities, which drives the quartile
diagnostics and the confidence-ordered review grids.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import Dataset
from .errors import DataError
from .learn import (
    MlpSpec,
    PredictorModel,
    TrainSchedule,
    confidence_margin,
    expectation_decode,
    most_confused_pairs,
    train,
)

FEATURE_DIM = 2048
FVEC_MAGIC = b"FVEC"
N_SCORE_CLASSES = 11

CATEGORY_SCHEDULE = ((4, 1e-3), (4, 1e-5))
SCORE_SCHEDULE = ((4, 1e-2), (4, 1e-3))


@dataclass
class FeatureSet:
    ids: list[str]
    matrix: np.ndarray  # (n, FEATURE_DIM)
    rejected: list[tuple[int, str]] = field(default_factory=list)  # (row, reason)
    unmatched: list[str] = field(default_factory=list)  # ids absent from the dataset

    def __len__(self):
        return len(self.ids)

    def index_of(self, specimen_id: str) -> int:
        try:
            return self.ids.index(specimen_id)
        except ValueError:
            raise DataError(f"no feature vector for specimen {specimen_id!r}") from None

    def vector(self, specimen_id: str) -> np.ndarray:
        return self.matrix[self.index_of(specimen_id)]


@dataclass(frozen=True)
class Prediction:
    labels: tuple[str, ...]
    distribution: np.ndarray
    predicted: str
    confidence: float  # p(top1) - p(top2)
    expected_score: Optional[float] = None  # expectation decode, score heads only

    def as_dict(self) -> dict:
        return {
            "labels": list(self.labels),
            "distribution": [float(p) for p in self.distribution],
            "predicted": self.predicted,
            "confidence": self.confidence,
            "expected_score": self.expected_score,
        }


def write_features(path, ids: Sequence[str], matrix: np.ndarray) -> None:
    """Write the binary sidecar: magic, u32 count, u32 dim, then per
    record a u16 id length, the id bytes, and dim little-endian f32."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != FEATURE_DIM:
        raise DataError(f"matrix must be (n, {FEATURE_DIM}), got {matrix.shape}")
    with open(path, "wb") as fh:
        fh.write(FVEC_MAGIC)
        fh.write(struct.pack("<II", len(ids), FEATURE_DIM))
        for sid, row in zip(ids, matrix):
            raw = sid.encode("utf-8")
            fh.write(struct.pack("<H", len(raw)))
            fh.write(raw)
            fh.write(row.astype("<f4").tobytes())


def _read_binary(path: Path) -> tuple[list[str], np.ndarray]:
    raw = path.read_bytes()
    count, dim = struct.unpack("<II", raw[4:12])
    if dim != FEATURE_DIM:
        raise DataError(f"{path}: vector length {dim} != {FEATURE_DIM}")
    ids: list[str] = []
    rows = np.empty((count, dim), dtype=np.float64)
    pos = 12
    for i in range(count):
        (id_len,) = struct.unpack_from("<H", raw, pos)
        pos += 2
        ids.append(raw[pos : pos + id_len].decode("utf-8"))
        pos += id_len
        rows[i] = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos)
        pos += 4 * dim
    if pos != len(raw):
        raise DataError(f"{path}: trailing bytes after {count} records")
    return ids, rows


def _read_csv(path: Path) -> tuple[list[str], np.ndarray, list[tuple[int, str]]]:
    ids: list[str] = []
    rows: list[np.ndarray] = []
    rejected: list[tuple[int, str]] = []
    with path.open(newline="", encoding="utf-8") as fh:
        for idx, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) - 1 != FEATURE_DIM:
                rejected.append((idx, f"vector length {len(row) - 1} != {FEATURE_DIM}"))
                continue
            try:
                values = np.array([float(c) for c in row[1:]])
            except ValueError:
                rejected.append((idx, "non-numeric feature cell"))
                continue
            ids.append(row[0])
            rows.append(values)
    matrix = np.stack(rows) if rows else np.empty((0, FEATURE_DIM))
    return ids, matrix, rejected


def ingest_features(path, ds: Optional[Dataset] = None) -> FeatureSet:
    """Load a sidecar (binary FVEC or CSV).  Malformed CSV rows are
    rejected with their row index; duplicate ids are fatal; ids missing
    from the dataset are listed in ``unmatched``."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"feature sidecar not found: {path}")
    rejected: list[tuple[int, str]] = []
    if path.open("rb").read(4) == FVEC_MAGIC:
        ids, matrix = _read_binary(path)
    else:
        ids, matrix, rejected = _read_csv(path)
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"duplicate feature ids: {dupes[:5]}")
    if not np.all(np.isfinite(matrix)):
        raise DataError(f"{path}: non-finite feature values")
    unmatched = [i for i in ids if i not in ds] if ds is not None else []
    return FeatureSet(ids=ids, matrix=matrix, rejected=rejected, unmatched=unmatched)


def _aligned_sets(features: FeatureSet, ds: Dataset, target: str):
    """(X, y, labels) per split for specimens that are rated, carry the
    needed label and have a feature vector."""
    index = {sid: i for i, sid in enumerate(features.ids)}
    rows = {"train": [], "validation": []}
    for s in ds.specimens:
        if s.split not in rows or s.id not in index or s.evaluation is None:
            continue
        if target == "category" and s.category is None:
            continue
        rows[s.split].append(s)
    if target == "category":
        labels = sorted({s.category for split in rows.values() for s in split})
    else:
        labels = [str(i) for i in range(N_SCORE_CLASSES)]
    label_idx = {lab: i for i, lab in enumerate(labels)}
    out = {}
    for split, specimens in rows.items():
        X = features.matrix[[index[s.id] for s in specimens]]
        if target == "category":
            y = np.array([label_idx[s.category] for s in specimens], dtype=int)
        else:
            y = np.array([s.score for s in specimens], dtype=int)
        out[split] = (X, y)
    return out["train"], out["validation"], labels


def train_category_head(
    features: FeatureSet, ds: Dataset, seed: int = 0, schedule_phases=CATEGORY_SCHEDULE
) -> PredictorModel:
    """Affine + softmax over the dataset's categories on raw features."""
    train_set, val_set, labels = _aligned_sets(features, ds, "category")
    if len(train_set[0]) == 0:
        raise DataError("no labelled training specimens with features")
    spec = MlpSpec(FEATURE_DIM, (), len(labels))
    schedule = TrainSchedule(phases=schedule_phases, batch_size=64, seed=seed)
    params, reports = train(spec, schedule, train_set, val_set)
    metrics = {"per_phase": [r.as_dict() for r in reports]}
    if reports:
        metrics["accuracy"] = reports[-1].accuracy
        metrics["most_confused"] = [
            [list(pair), count]
            for pair, count in most_confused_pairs(reports[-1].confusion, labels)
        ]
    return PredictorModel(spec, params, labels, "category", schedule, None, metrics)


def train_score_head(
    features: FeatureSet, ds: Dataset, seed: int = 0, schedule_phases=SCORE_SCHEDULE
) -> PredictorModel:
    """11-class softmax over scores 0-10, decoded by expectation."""
    train_set, val_set, labels = _aligned_sets(features, ds, "score")
    if len(train_set[0]) == 0:
        raise DataError("no rated training specimens with features")
    spec = MlpSpec(FEATURE_DIM, (), N_SCORE_CLASSES)
    schedule = TrainSchedule(phases=schedule_phases, batch_size=64, seed=seed)
    params, reports = train(spec, schedule, train_set, val_set)
    metrics = {"per_phase": [r.as_dict() for r in reports]}
    if reports:
        metrics["rmse"] = reports[-1].rmse
    return PredictorModel(spec, params, labels, "score", schedule, None, metrics)


def predict(model: PredictorModel, feature) -> Prediction:
    """Deterministic category/score distribution for one feature vector."""
    x = np.asarray(feature, dtype=np.float64)
    if x.shape != (model.spec.input_dim,):
        raise DataError(f"feature shape {x.shape} != ({model.spec.input_dim},)")
    dist = model.predict_proba(x)
    top = int(dist.argmax())
    expected = float(expectation_decode(dist)) if model.target == "score" else None
    return Prediction(
        labels=tuple(model.labels),
        distribution=dist,
        predicted=model.labels[top],
        confidence=float(confidence_margin(dist[None, :])[0]),
        expected_score=expected,
    )


def quartile_accuracy(
    predictions: Sequence[Prediction],
    truths: Sequence[str],
    ids: Optional[Sequence[str]] = None,
) -> np.ndarray:
    """Accuracy per confidence quartile, most confident first.

    Ties in confidence are broken by specimen id; quartile sizes differ
    by at most one (larger quartiles at the top).
    """
    n = len(predictions)
    if n < 4:
        raise DataError(f"need at least 4 predictions, got {n}")
    if len(truths) != n:
        raise DataError("predictions and truths must align")
    keys = ids if ids is not None else [str(i) for i in range(n)]
    order = sorted(range(n), key=lambda i: (-predictions[i].confidence, keys[i]))
    quartiles = np.array_split(np.array(order), 4)
    return np.array(
        [float(np.mean([predictions[i].predicted == truths[i] for i in q])) for q in quartiles]
    )


def order_by_confidence(
    predictions: Sequence[Prediction], ids: Sequence[str]
) -> list[tuple[str, list[str]]]:
    """Specimen ids grouped by predicted category, each group in stable
    descending confidence order (ties by id); empty groups omitted."""
    if len(predictions) != len(ids):
        raise DataError("predictions and ids must align")
    groups: dict[str, list[tuple[float, str]]] = {}
    for pred, sid in zip(predictions, ids):
        groups.setdefault(pred.predicted, []).append((pred.confidence, sid))
    out = []
    for category in sorted(groups):
        members = sorted(groups[category], key=lambda t: (-t[0], t[1]))
        out.append((category, [sid for _, sid in members]))
    return out
