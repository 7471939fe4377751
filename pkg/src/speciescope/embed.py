"""PCA pre-reduction and exact t-SNE for the 2-D genotype/phenotype maps.

The t-SNE here is the exact O(n^2) variant: per-row Gaussian bandwidths
found by binary search against a target perplexity, Student-t kernel in
the plane, gradient descent with adaptive gains, early exaggeration x12
for the first 250 iterations and a momentum switch 0.5 -> 0.8 at 250.
Everything is seeded and runs single-threaded, so embeddings reproduce
bit-for-bit.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.spatial.distance import squareform

from .dataset import Dataset, genotype_bounds, genotype_matrix
from .errors import DataError, NumericError
from .stats import band_scores

EXAGGERATION = 12.0
EXPLORE_ITERS = 250
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
MIN_GAIN = 0.01
KL_CHECK_EVERY = 50

GENOTYPE_PERPLEXITY = 60.0
FEATURE_PERPLEXITY = 20.0
DEFAULT_EPSILON = 10.0
FEATURE_PRE_REDUCE_DIMS = 50
SCORE_BANDS = 6


@dataclass(frozen=True)
class TsneConfig:
    perplexity: float
    epsilon: float = DEFAULT_EPSILON  # gradient-descent learning rate
    iterations: int = 1000
    seed: int = 0
    pre_reduce_dims: Optional[int] = None

    def __post_init__(self):
        if self.perplexity <= 0:
            raise DataError(f"perplexity must be positive, got {self.perplexity}")
        if self.epsilon <= 0:
            raise DataError(f"epsilon must be positive, got {self.epsilon}")
        if self.iterations < 250:
            raise DataError(f"iterations must be >= 250, got {self.iterations}")

    def as_dict(self) -> dict:
        return {
            "perplexity": self.perplexity,
            "epsilon": self.epsilon,
            "iterations": self.iterations,
            "seed": self.seed,
            "pre_reduce_dims": self.pre_reduce_dims,
        }


@dataclass
class Embedding2D:
    ids: list[str]
    points: np.ndarray  # (n, 2)
    final_kl: float
    kl_history: list[tuple[int, float]] = field(default_factory=list)
    config: Optional[TsneConfig] = None
    categories: Optional[list] = None
    scores: Optional[list] = None
    bands: Optional[list] = None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["id", "x", "y", "category", "score", "band"])
            for i, sid in enumerate(self.ids):
                writer.writerow(
                    [
                        sid,
                        repr(float(self.points[i, 0])),
                        repr(float(self.points[i, 1])),
                        (self.categories or [None] * len(self.ids))[i] or "",
                        "" if (self.scores or [None] * len(self.ids))[i] is None else self.scores[i],
                        "" if (self.bands or [None] * len(self.ids))[i] is None else self.bands[i],
                    ]
                )

    def as_dict(self) -> dict:
        return {
            "ids": self.ids,
            "points": self.points.tolist(),
            "final_kl": self.final_kl,
            "kl_history": [list(t) for t in self.kl_history],
            "config": self.config.as_dict() if self.config else None,
            "categories": self.categories,
            "scores": self.scores,
            "bands": self.bands,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh)


def pca(data, out_dims: int) -> np.ndarray:
    """Project onto the top principal components of mean-centered data.

    Components are ordered by descending eigenvalue with a deterministic
    sign convention: each component's largest-magnitude loading is made
    positive.  Rank-deficient data is fine (trailing zero eigenvalues).
    """
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2:
        raise DataError(f"expected an (n, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("data must be finite")
    n, d = X.shape
    if not 1 <= out_dims <= min(n, d):
        raise DataError(f"out_dims {out_dims} outside [1, {min(n, d)}]")
    centered = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centered, full_matrices=False)
    components = vt[:out_dims]
    flip = np.sign(components[np.arange(out_dims), np.abs(components).argmax(axis=1)])
    flip[flip == 0] = 1.0
    return centered @ (components * flip[:, None]).T


def _row_entropies(sq_dists: np.ndarray, betas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Shannon entropy (bits) and conditional probabilities per row for
    Gaussian affinities exp(-beta * d^2), excluding the diagonal."""
    n = sq_dists.shape[0]
    off = ~np.eye(n, dtype=bool)
    shifted = sq_dists - np.where(off, sq_dists, np.inf).min(axis=1, keepdims=True)
    shifted[~off] = 0.0  # diagonal is masked below; keep exp() in range
    W = np.exp(-betas[:, None] * shifted)
    W[~off] = 0.0
    Z = W.sum(axis=1, keepdims=True)
    P = W / Z
    logp = np.log2(P, where=P > 0, out=np.zeros_like(P))
    H = -(P * logp).sum(axis=1)
    return H, P


def perplexity_calibration(distances, perplexity: float, max_iter: int = 150) -> np.ndarray:
    """Joint affinity matrix P for the given distances and perplexity.

    Per-row precisions are bisected until the conditional entropy equals
    log2(perplexity) to near machine precision (rows that cannot reach
    the target, e.g. equidistant neighbourhoods, keep their limit).  The
    conditional matrix is then symmetrized to (P + P^T) / 2n.
    """
    D = np.asarray(distances, dtype=np.float64)
    n = D.shape[0]
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DataError(f"distances must be square, got {D.shape}")
    if n < 2:
        raise DataError("need at least 2 points")
    if np.any(D < 0) or np.any(np.diag(D) != 0) or not np.allclose(D, D.T, atol=1e-8):
        raise DataError("distances must be symmetric, nonnegative, zero-diagonal")
    if not perplexity < n:
        raise DataError(f"perplexity {perplexity} infeasible for n={n}")
    target = np.log2(perplexity)
    sq = D * D
    betas = np.ones(n)
    lo = np.zeros(n)
    hi = np.full(n, np.inf)
    for _ in range(max_iter):
        H, P = _row_entropies(sq, betas)
        diff = H - target
        if np.all(np.abs(diff) < 1e-13):
            break
        too_spread = diff > 0  # entropy too high -> tighten (raise beta)
        lo = np.where(too_spread, betas, lo)
        hi = np.where(too_spread, hi, betas)
        betas = np.where(
            too_spread,
            np.where(np.isinf(hi), betas * 2.0, (betas + hi) / 2.0),
            np.where(lo == 0.0, betas / 2.0, (betas + lo) / 2.0),
        )
    _, P = _row_entropies(sq, betas)
    return (P + P.T) / (2.0 * n)


def _kl_divergence(P: np.ndarray, Y: np.ndarray) -> float:
    n = len(Y)
    num = 1.0 / (1.0 + _sq_distances(Y))
    np.fill_diagonal(num, 0.0)
    Q = np.maximum(num / num.sum(), 1e-12)
    mask = P > 0
    return float(np.sum(P[mask] * np.log(P[mask] / Q[mask])))


def _sq_distances(X: np.ndarray) -> np.ndarray:
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.maximum(d2, 0.0, out=d2)
    return d2


def pairwise_distances(X: np.ndarray) -> np.ndarray:
    # pdist subtracts coordinates before squaring: keeps distances stable
    # under rigid transforms of the input
    from scipy.spatial.distance import pdist

    return squareform(pdist(np.asarray(X, dtype=np.float64)))


def tsne(data, cfg: TsneConfig, ids: Optional[Sequence[str]] = None) -> Embedding2D:
    """Exact t-SNE of an (n, d) matrix into the plane."""
    X = np.asarray(data, dtype=np.float64)
    if X.ndim != 2 or len(X) < 10:
        raise DataError(f"need an (n>=10, d) matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("data must be finite")
    n = len(X)
    if not cfg.perplexity < (n - 1) / 3:
        raise DataError(
            f"perplexity {cfg.perplexity} too large for n={n} (needs perplexity < (n-1)/3)"
        )
    if cfg.pre_reduce_dims is not None and cfg.pre_reduce_dims < X.shape[1]:
        X = pca(X, min(cfg.pre_reduce_dims, min(X.shape)))
    P = perplexity_calibration(pairwise_distances(X), cfg.perplexity)

    rng = np.random.default_rng(cfg.seed)
    Y = rng.normal(0.0, 1e-4, (n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    P_run = P * EXAGGERATION
    kl_history: list[tuple[int, float]] = []
    for it in range(cfg.iterations):
        if it == EXPLORE_ITERS:
            P_run = P
        momentum = MOMENTUM_EARLY if it < EXPLORE_ITERS else MOMENTUM_LATE
        num = 1.0 / (1.0 + _sq_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        PQn = (P_run - Q) * num
        grad = 4.0 * ((np.diag(PQn.sum(axis=1)) - PQn) @ Y)
        flips = np.sign(grad) != np.sign(velocity)
        gains = np.where(flips, gains + 0.2, gains * 0.8)
        np.clip(gains, MIN_GAIN, None, out=gains)
        velocity = momentum * velocity - cfg.epsilon * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)
        if (it + 1) % KL_CHECK_EVERY == 0 or it == cfg.iterations - 1:
            kl = _kl_divergence(P, Y)
            if not np.isfinite(kl):
                raise NumericError(f"non-finite KL at iteration {it + 1}")
            kl_history.append((it + 1, kl))
    final_kl = kl_history[-1][1]
    return Embedding2D(
        ids=list(ids) if ids is not None else [str(i) for i in range(n)],
        points=Y,
        final_kl=final_kl,
        kl_history=kl_history,
        config=cfg,
    )


def _annotate(emb: Embedding2D, specimens) -> Embedding2D:
    emb.categories = [s.category for s in specimens]
    emb.scores = [s.score for s in specimens]
    scored = [(i, s.score) for i, s in enumerate(specimens) if s.score is not None]
    bands: list = [None] * len(specimens)
    if scored:
        idxs, scores = zip(*scored)
        values, _ = band_scores(list(scores), SCORE_BANDS)
        for i, b in zip(idxs, values):
            bands[i] = int(b)
    emb.bands = bands
    return emb


def embed_genotypes(ds: Dataset, iterations: int = 1000, seed: int = 0) -> Embedding2D:
    """Genotype-space map: min-max normalized genotypes, perplexity 60,
    learning rate 10, no pre-reduction."""
    specimens = list(ds.specimens)
    X = genotype_matrix(specimens)
    bounds = genotype_bounds(ds)
    span = np.where(bounds[:, 1] > bounds[:, 0], bounds[:, 1] - bounds[:, 0], 1.0)
    X = (X - bounds[:, 0]) / span
    cfg = TsneConfig(
        perplexity=GENOTYPE_PERPLEXITY, epsilon=DEFAULT_EPSILON, iterations=iterations, seed=seed
    )
    emb = tsne(X, cfg, ids=[s.id for s in specimens])
    return _annotate(emb, specimens)


def embed_features(
    features: np.ndarray,
    ids: Sequence[str],
    specimens=None,
    iterations: int = 1000,
    seed: int = 0,
) -> Embedding2D:
    """Phenotype-space map: raw feature vectors, PCA pre-reduction to 50
    dims, perplexity 20, learning rate 10."""
    cfg = TsneConfig(
        perplexity=FEATURE_PERPLEXITY,
        epsilon=DEFAULT_EPSILON,
        iterations=iterations,
        seed=seed,
        pre_reduce_dims=FEATURE_PRE_REDUCE_DIMS,
    )
    emb = tsne(np.asarray(features, dtype=np.float64), cfg, ids=list(ids))
    if specimens is not None:
        _annotate(emb, specimens)
    return emb
