"""Synthetic stand-in dataset: toy-generator renders rated by a
deterministic scripted rater.

Used wherever the published artist dataset is not on disk: the rater
assigns a category from each render's morphology regime and a score that
rises monotonically with compression complexity, so the full pipeline
(measures, correlations, predictors, service) has realistic structure to
chew on.  Everything is seeded; rebuilding with the same arguments gives
byte-identical datasets.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from . import measures as M
from .dataset import Dataset, Evaluation, Genotype, Specimen, load_manifest, save_manifest
from .explore import toy_generate
from .features import FEATURE_DIM, FeatureSet

DEFAULT_N = 1774
DEFAULT_TRAIN = 1421  # remainder becomes the validation split
FAILURE_RATE = 0.12
IMAGE_SIZE = 256
SCORE_ACOMPLEX_CAP = 0.45


def sample_genotype(rng: np.random.Generator) -> np.ndarray:
    """Uniform genotype with occasional amplitude collapse, mimicking
    generative runs that fail to grow anything."""
    g = rng.random(12)
    if rng.random() < FAILURE_RATE:
        g[0] *= 0.04
    return g


def rate(img: np.ndarray) -> tuple[int, str, M.MeasureRecord]:
    """Deterministic scripted rater.

    Category comes from the morphology regime (contour count, Euler sign,
    structural complexity); empty renders score 0, all others score
    1..10 monotonically in compression complexity.
    """
    img = np.round(np.asarray(img, dtype=np.float64) * 255.0) / 255.0
    rec = M.measure_all(img)
    fg = float((img >= M.otsu_threshold(img)).mean()) if rec.entropy > 0 else 0.0
    if rec.entropy < 0.05 or fg < 0.005:
        return 0, "empty", rec
    if rec.contours <= 30:
        category = "blobs"
    elif rec.contours <= 200:
        category = "stripes" if rec.euler >= 0 else "lace"
    else:
        category = "cells" if rec.scomplex >= 0.04 else "mess"
    score = int(np.clip(1 + round(9 * min(rec.acomplex, SCORE_ACOMPLEX_CAP) / SCORE_ACOMPLEX_CAP), 1, 10))
    return score, category, rec


def build_dataset(
    root,
    n: int = DEFAULT_N,
    seed: int = 11,
    image_size: int = IMAGE_SIZE,
    n_train: int | None = None,
    write_images: bool = True,
) -> Dataset:
    """Render, rate and persist a synthetic dataset under ``root``.

    Writes images/<id>.png and manifest.csv; the first ``n_train``
    specimens (default: the published 1421/353 proportion) form the
    train split, the rest validation.  Returns the loaded Dataset.
    """
    root = Path(root)
    (root / "images").mkdir(parents=True, exist_ok=True)
    if n_train is None:
        n_train = round(n * DEFAULT_TRAIN / DEFAULT_N)
    rng = np.random.default_rng(seed)
    specimens = []
    for i in range(n):
        g = sample_genotype(rng)
        img = toy_generate(g, size=image_size)
        score, category, _ = rate(img)
        sid = f"syn{i:05d}"
        rel = f"images/{sid}.png"
        if write_images:
            Image.fromarray(np.round(img * 255.0).astype(np.uint8)).save(root / rel)
        specimens.append(
            Specimen(
                id=sid,
                genotype=Genotype(g),
                image_path=rel,
                evaluation=Evaluation(score=score, category=category, author="scripted-rater"),
                split="train" if i < n_train else "validation",
            )
        )
    ds = Dataset(specimens, manifest_path=root / "manifest.csv")
    save_manifest(ds, root / "manifest.csv")
    return load_manifest(root / "manifest.csv")


def separable_features(ds: Dataset, seed: int = 0, magnitude: float = 2.0) -> FeatureSet:
    """Synthetic linearly-separable stand-in for extractor features:
    one 32-wide block per category plus one per score, over mild noise."""
    rng = np.random.default_rng(seed)
    labels = sorted(ds.category_set)
    label_idx = {c: i for i, c in enumerate(labels)}
    ids = [s.id for s in ds.specimens]
    X = rng.normal(0.0, 0.1, (len(ids), FEATURE_DIM))
    for i, s in enumerate(ds.specimens):
        if s.category is not None:
            c = label_idx[s.category]
            X[i, c * 32 : (c + 1) * 32] += magnitude
        if s.score is not None:
            X[i, 1024 + 32 * s.score : 1024 + 32 * (s.score + 1)] += magnitude
    return FeatureSet(ids=ids, matrix=X)
