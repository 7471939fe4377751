"""Specimen dataset: manifest loading, train/validation splits, category
census and the append-only evaluation ledger.

The manifest is a flat CSV (id, image, g0..g11, score, category, split).
Artist evaluations arriving after load are appended to a JSON-lines ledger
and never rewrite the manifest; replaying the ledger reproduces the
current evaluation state (last write per specimen wins).
"""

from __future__ import annotations

import csv
import json
import math
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DataError

GENOTYPE_DIM = 12
SPLITS = ("train", "validation", "unassigned")
UNLABELED_TOKEN = "(unlabeled)"

MANIFEST_COLUMNS = ["id", "image"] + [f"g{i}" for i in range(GENOTYPE_DIM)] + [
    "score",
    "category",
    "split",
]


@dataclass(frozen=True)
class Genotype:
    """12 real generative parameters, optionally with per-dimension bounds."""

    values: np.ndarray
    bounds: Optional[np.ndarray] = None  # shape (12, 2) of [lo, hi]

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", vals)
        if vals.shape != (GENOTYPE_DIM,):
            raise DataError(f"genotype must have {GENOTYPE_DIM} values, got shape {vals.shape}")
        if not np.all(np.isfinite(vals)):
            raise DataError("genotype values must be finite")
        if self.bounds is not None:
            b = np.asarray(self.bounds, dtype=np.float64)
            object.__setattr__(self, "bounds", b)
            if b.shape != (GENOTYPE_DIM, 2):
                raise DataError(f"bounds must have shape ({GENOTYPE_DIM}, 2), got {b.shape}")
            if np.any(vals < b[:, 0]) or np.any(vals > b[:, 1]):
                raise DataError("genotype values outside declared bounds")


@dataclass(frozen=True)
class Evaluation:
    """One artist judgement: integer score 0-10 (0 = failure case) and an
    optional free-text category label."""

    score: int
    category: Optional[str] = None
    author: str = ""
    timestamp: Optional[datetime] = None

    def __post_init__(self):
        if not isinstance(self.score, (int, np.integer)) or isinstance(self.score, bool):
            raise DataError(f"score must be an integer, got {self.score!r}")
        if not 0 <= self.score <= 10:
            raise DataError(f"score must lie in [0,10], got {self.score}")
        if self.category is not None:
            object.__setattr__(self, "category", normalize_category(self.category))
        if self.timestamp is None:
            object.__setattr__(self, "timestamp", datetime.now(timezone.utc))


@dataclass(frozen=True)
class Specimen:
    id: str
    genotype: Genotype
    image_path: Optional[str] = None
    evaluation: Optional[Evaluation] = None
    split: str = "unassigned"

    def __post_init__(self):
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")

    @property
    def score(self) -> Optional[int]:
        return self.evaluation.score if self.evaluation else None

    @property
    def category(self) -> Optional[str]:
        return self.evaluation.category if self.evaluation else None


@dataclass(frozen=True)
class RejectedRow:
    row: int  # 1-based data row index (header excluded)
    id: Optional[str]
    reason: str


@dataclass
class Dataset:
    """Immutable-after-load ordered collection of specimens."""

    specimens: list[Specimen]
    manifest_path: Optional[Path] = None
    rejected: list[RejectedRow] = field(default_factory=list)

    def __post_init__(self):
        ids = [s.id for s in self.specimens]
        if len(set(ids)) != len(ids):
            dupes = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate specimen ids: {dupes[:5]}")
        self._by_id = {s.id: s for s in self.specimens}

    def __len__(self):
        return len(self.specimens)

    def __iter__(self):
        return iter(self.specimens)

    def get(self, specimen_id: str) -> Specimen:
        try:
            return self._by_id[specimen_id]
        except KeyError:
            raise DataError(f"unknown specimen id {specimen_id!r}") from None

    def __contains__(self, specimen_id: str) -> bool:
        return specimen_id in self._by_id

    @property
    def category_set(self) -> set[str]:
        return {s.category for s in self.specimens if s.category is not None}

    def subset(self, split: str) -> list[Specimen]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}")
        return [s for s in self.specimens if s.split == split]

    def with_evaluations(self, evals: dict[str, Evaluation]) -> "Dataset":
        """Copy of the dataset with evaluations overridden from a replay."""
        specimens = [
            replace(s, evaluation=evals.get(s.id, s.evaluation)) for s in self.specimens
        ]
        return Dataset(specimens, manifest_path=self.manifest_path, rejected=list(self.rejected))


def normalize_category(label: str) -> str:
    return label.strip().lower()


def _parse_row(row: dict, row_idx: int) -> Specimen:
    gvals = []
    for i in range(GENOTYPE_DIM):
        cell = (row.get(f"g{i}") or "").strip()
        if cell == "":
            raise DataError(f"missing genotype cell g{i}")
        try:
            gvals.append(float(cell))
        except ValueError:
            raise DataError(f"non-numeric genotype cell g{i}={cell!r}") from None
        if not math.isfinite(gvals[-1]):
            raise DataError(f"non-finite genotype cell g{i}={cell!r}")
    score_cell = (row.get("score") or "").strip()
    category_cell = (row.get("category") or "").strip()
    evaluation = None
    if score_cell != "":
        try:
            score = int(score_cell)
        except ValueError:
            raise DataError(f"non-integer score {score_cell!r}") from None
        evaluation = Evaluation(score=score, category=category_cell or None)
    elif category_cell != "":
        raise DataError("category present without a score")
    split = (row.get("split") or "").strip() or "unassigned"
    return Specimen(
        id=row["id"].strip(),
        genotype=Genotype(np.array(gvals)),
        image_path=(row.get("image") or "").strip() or None,
        evaluation=evaluation,
        split=split,
    )


def load_manifest(path) -> Dataset:
    """Load a manifest CSV.  Rows with malformed genotypes or evaluations
    are rejected into ``Dataset.rejected`` with their row index; file-level
    problems (missing file, bad header, duplicate ids) raise DataError."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"manifest not found: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"manifest {path} is empty (no header)")
        missing = [c for c in MANIFEST_COLUMNS if c not in reader.fieldnames]
        if missing:
            raise DataError(f"manifest {path} is missing columns: {missing}")
        specimens: list[Specimen] = []
        rejected: list[RejectedRow] = []
        for idx, row in enumerate(reader, start=1):
            rid = (row.get("id") or "").strip() or None
            if rid is None:
                rejected.append(RejectedRow(idx, None, "missing id"))
                continue
            try:
                specimens.append(_parse_row(row, idx))
            except DataError as exc:
                rejected.append(RejectedRow(idx, rid, str(exc)))
    return Dataset(specimens, manifest_path=path, rejected=rejected)


def save_manifest(ds: Dataset, path) -> None:
    """Write a dataset back to manifest CSV form (UTF-8, '.' decimals)."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_COLUMNS)
        for s in ds.specimens:
            row = [s.id, s.image_path or ""]
            row += [repr(float(v)) for v in s.genotype.values]
            row += [
                "" if s.score is None else str(s.score),
                s.category or "",
                s.split if s.split != "unassigned" else "",
            ]
            writer.writerow(row)


def split_dataset(ds: Dataset, spec) -> Dataset:
    """Assign splits either from explicit id lists or from (fraction, seed).

    ``spec`` is {"train": [...], "validation": [...]} (ids must exist and
    not overlap; unlisted ids become unassigned) or a (fraction, seed)
    tuple with fraction in (0, 1): a seeded shuffle of the dataset's id
    order sends the first floor(n * fraction) to train, the rest to
    validation.
    """
    if isinstance(spec, dict):
        train = list(spec.get("train", []))
        val = list(spec.get("validation", []))
        overlap = set(train) & set(val)
        if overlap:
            raise DataError(f"ids in both splits: {sorted(overlap)[:5]}")
        for sid in train + val:
            ds.get(sid)
        train_set, val_set = set(train), set(val)
        assignment = {
            s.id: "train" if s.id in train_set else "validation" if s.id in val_set else "unassigned"
            for s in ds.specimens
        }
    else:
        fraction, seed = spec
        if not 0.0 < fraction < 1.0:
            raise DataError(f"fraction must lie in (0,1), got {fraction}")
        order = np.arange(len(ds.specimens))
        np.random.default_rng(seed).shuffle(order)
        n_train = int(len(order) * fraction)
        train_ids = {ds.specimens[i].id for i in order[:n_train]}
        assignment = {
            s.id: "train" if s.id in train_ids else "validation" for s in ds.specimens
        }
    specimens = [replace(s, split=assignment[s.id]) for s in ds.specimens]
    return Dataset(specimens, manifest_path=ds.manifest_path, rejected=list(ds.rejected))


def category_census(ds: Dataset) -> dict[str, int]:
    """Specimen count per category label; specimens without a label are
    counted under UNLABELED_TOKEN."""
    census: dict[str, int] = {}
    for s in ds.specimens:
        label = s.category if s.category is not None else UNLABELED_TOKEN
        census[label] = census.get(label, 0) + 1
    return census


def genotype_matrix(specimens: Sequence[Specimen]) -> np.ndarray:
    """Stack genotypes into an (n, 12) float matrix."""
    if not specimens:
        return np.zeros((0, GENOTYPE_DIM))
    return np.stack([s.genotype.values for s in specimens])


def genotype_bounds(ds: Dataset) -> np.ndarray:
    """Per-dimension [min, max] over the dataset (declared bounds win)."""
    declared = [s.genotype.bounds for s in ds.specimens if s.genotype.bounds is not None]
    if declared:
        return declared[0]
    X = genotype_matrix(ds.specimens)
    if len(X) == 0:
        raise DataError("cannot derive bounds from an empty dataset")
    return np.stack([X.min(axis=0), X.max(axis=0)], axis=1)


@dataclass(frozen=True)
class LedgerEntry:
    sequence: int
    specimen_id: str
    evaluation: Evaluation
    request_id: Optional[str] = None  # client-supplied idempotency token


class Ledger:
    """Append-only JSON-lines evaluation log with a single-writer contract.

    Each line is {seq, id, score, category, author, ts}; appends are
    flushed and fsynced before returning so a crash never loses an
    acknowledged evaluation.
    """

    def __init__(self, path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._seq = 0
        self._by_request_id: dict[str, LedgerEntry] = {}
        if self.path.exists():
            for entry in self.replay_entries():
                self._seq = entry.sequence
                if entry.request_id:
                    self._by_request_id[entry.request_id] = entry

    def append(
        self, specimen_id: str, evaluation: Evaluation, request_id: Optional[str] = None
    ) -> LedgerEntry:
        """Durably append one evaluation.  A request_id seen before makes
        the call a no-op returning the original entry (retry-safe)."""
        with self._lock:
            if request_id and request_id in self._by_request_id:
                return self._by_request_id[request_id]
            self._seq += 1
            entry = LedgerEntry(self._seq, specimen_id, evaluation, request_id)
            record = {
                "seq": entry.sequence,
                "id": specimen_id,
                "score": evaluation.score,
                "category": evaluation.category,
                "author": evaluation.author,
                "ts": evaluation.timestamp.isoformat(),
            }
            if request_id:
                record["rid"] = request_id
            line = json.dumps(record, ensure_ascii=False)
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()
                import os

                os.fsync(fh.fileno())
            if request_id:
                self._by_request_id[request_id] = entry
            return entry

    def replay_entries(self) -> Iterable[LedgerEntry]:
        if not self.path.exists():
            return
        with self.path.open(encoding="utf-8") as fh:
            last_seq = 0
            for line_no, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                rec = json.loads(line)
                if rec["seq"] <= last_seq:
                    raise DataError(
                        f"ledger {self.path} line {line_no}: non-increasing sequence"
                    )
                last_seq = rec["seq"]
                yield LedgerEntry(
                    rec["seq"],
                    rec["id"],
                    Evaluation(
                        score=rec["score"],
                        category=rec["category"],
                        author=rec.get("author", ""),
                        timestamp=datetime.fromisoformat(rec["ts"]),
                    ),
                    rec.get("rid"),
                )

    def replay(self) -> dict[str, Evaluation]:
        """Current evaluation per specimen: the latest entry wins."""
        state: dict[str, Evaluation] = {}
        for entry in self.replay_entries():
            state[entry.specimen_id] = entry.evaluation
        return state


def record_evaluation(
    ledger: Ledger, ds: Dataset, specimen_id: str, evaluation: Evaluation
) -> LedgerEntry:
    """Validate the specimen exists, then durably append the evaluation."""
    ds.get(specimen_id)
    return ledger.append(specimen_id, evaluation)
