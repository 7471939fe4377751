"""Design-space navigation: cross-section prediction maps, transition
scanning along genotype segments, and next-generation proposal strategies
(random, mutation, crossover, Monte Carlo rejection sampling).

Also hosts the pluggable phenotype generator interface with a built-in
toy generator: a superposed-wave pattern whose visual regimes (empty,
blobs, stripes, cellular, noisy) shift with the genotype, so the full
generate -> rate -> retrain -> map -> propose loop runs end to end
without any external simulator.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Protocol, Sequence, Union

import numpy as np

from .dataset import GENOTYPE_DIM, Genotype, Specimen
from .errors import DataError
from .features import Prediction
from .learn import PredictorModel

UNIT_BOUNDS = np.stack([np.zeros(GENOTYPE_DIM), np.ones(GENOTYPE_DIM)], axis=1)

TOY_SIZE = 512

PredictFn = Callable[[np.ndarray], Union[Prediction, float]]


def _as_predict_fn(model) -> PredictFn:
    if isinstance(model, PredictorModel):
        from .genopredict import predict_tabular

        return lambda g: predict_tabular(model, g)
    if callable(model):
        return model
    raise DataError(f"not a predictor: {model!r}")


def _predicted_label(out) -> str:
    return out.predicted if isinstance(out, Prediction) else str(out)


def _predicted_score(out) -> float:
    if isinstance(out, Prediction):
        if out.expected_score is not None:
            return out.expected_score
        raise DataError("prediction carries no score; use a score-target model")
    return float(out)


@dataclass
class CrossSectionMap:
    base: Genotype
    dim_x: int
    dim_y: int
    ranges: tuple[tuple[float, float], tuple[float, float]]
    resolution: tuple[int, int]  # (nx, ny)
    target: str  # "category" or "score"
    labels: Optional[np.ndarray] = None  # (ny, nx) object array
    confidence: Optional[np.ndarray] = None  # (ny, nx)
    scores: Optional[np.ndarray] = None  # (ny, nx)

    def cell_genotype(self, ix: int, iy: int) -> np.ndarray:
        (x_lo, x_hi), (y_lo, y_hi) = self.ranges
        nx, ny = self.resolution
        g = self.base.values.copy()
        g[self.dim_x] = x_lo + (x_hi - x_lo) * (ix / (nx - 1) if nx > 1 else 0.0)
        g[self.dim_y] = y_lo + (y_hi - y_lo) * (iy / (ny - 1) if ny > 1 else 0.0)
        return g

    def as_dict(self) -> dict:
        return {
            "base": self.base.values.tolist(),
            "dim_x": self.dim_x,
            "dim_y": self.dim_y,
            "ranges": [list(r) for r in self.ranges],
            "resolution": list(self.resolution),
            "target": self.target,
            "labels": self.labels.tolist() if self.labels is not None else None,
            "confidence": self.confidence.tolist() if self.confidence is not None else None,
            "scores": self.scores.tolist() if self.scores is not None else None,
        }

    def to_json(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.as_dict(), fh)

    def to_png(self, path) -> None:
        """Category colormap or score heatmap as a PNG."""
        from PIL import Image

        nx, ny = self.resolution
        rgb = np.zeros((ny, nx, 3), dtype=np.uint8)
        if self.target == "category":
            palette = _category_palette(sorted({str(l) for l in self.labels.ravel()}))
            for iy in range(ny):
                for ix in range(nx):
                    rgb[iy, ix] = palette[str(self.labels[iy, ix])]
        else:
            lo, hi = float(self.scores.min()), float(self.scores.max())
            span = (hi - lo) or 1.0
            t = (self.scores - lo) / span
            rgb[..., 0] = (255 * t).astype(np.uint8)
            rgb[..., 2] = (255 * (1.0 - t)).astype(np.uint8)
        Image.fromarray(rgb[::-1]).save(path)  # y axis upward


def _category_palette(labels: Sequence[str]) -> dict[str, tuple[int, int, int]]:
    base = [
        (31, 119, 180),
        (255, 127, 14),
        (44, 160, 44),
        (214, 39, 40),
        (148, 103, 189),
        (140, 86, 75),
        (227, 119, 194),
        (127, 127, 127),
        (188, 189, 34),
        (23, 190, 207),
    ]
    return {lab: base[i % len(base)] for i, lab in enumerate(labels)}


def cross_section(
    model,
    base: Genotype,
    dim_x: int,
    dim_y: int,
    ranges,
    resolution=(32, 32),
) -> CrossSectionMap:
    """Evaluate a predictor over a 2-D grid through genotype space.

    The base genotype fills every dimension except dim_x/dim_y, which
    sweep their ranges (clipped to the genotype bounds, with a warning).
    Cells hold exactly the pointwise predictions, no interpolation.
    """
    if dim_x == dim_y:
        raise DataError("dim_x and dim_y must differ")
    for d in (dim_x, dim_y):
        if not 0 <= d < GENOTYPE_DIM:
            raise DataError(f"dimension index {d} outside 0..{GENOTYPE_DIM - 1}")
    nx, ny = resolution
    if nx < 2 or ny < 2:
        raise DataError(f"resolution must be at least 2x2, got {resolution}")
    predict = _as_predict_fn(model)
    bounds = base.bounds if base.bounds is not None else UNIT_BOUNDS
    clipped = []
    for d, (lo, hi) in zip((dim_x, dim_y), ranges):
        c_lo, c_hi = max(lo, bounds[d, 0]), min(hi, bounds[d, 1])
        if (c_lo, c_hi) != (lo, hi):
            warnings.warn(f"range for dim {d} clipped to [{c_lo}, {c_hi}]")
        if c_lo >= c_hi:
            raise DataError(f"empty range for dim {d}")
        clipped.append((c_lo, c_hi))
    cs = CrossSectionMap(
        base=base,
        dim_x=dim_x,
        dim_y=dim_y,
        ranges=(clipped[0], clipped[1]),
        resolution=(nx, ny),
        target="category",
    )
    first = predict(cs.cell_genotype(0, 0))
    if isinstance(first, Prediction) and first.expected_score is None:
        labels = np.empty((ny, nx), dtype=object)
        confidence = np.zeros((ny, nx))
        for iy in range(ny):
            for ix in range(nx):
                out = predict(cs.cell_genotype(ix, iy))
                labels[iy, ix] = out.predicted
                confidence[iy, ix] = out.confidence
        cs.labels = labels
        cs.confidence = confidence
    else:
        cs.target = "score"
        scores = np.zeros((ny, nx))
        for iy in range(ny):
            for ix in range(nx):
                scores[iy, ix] = _predicted_score(predict(cs.cell_genotype(ix, iy)))
        cs.scores = scores
    return cs


def find_transitions(
    model, start: Genotype, end: Genotype, steps: int, tol: float = 1e-3
) -> list[tuple[float, str, str]]:
    """Scan the segment start->end for predicted-label changes.

    Samples steps+1 points; each consecutive differing pair is refined by
    bisection until the bracket is narrower than ``tol``, reporting the
    bracket midpoint with the labels on either side.
    """
    if steps < 2:
        raise DataError(f"steps must be >= 2, got {steps}")
    predict = _as_predict_fn(model)
    a, b = start.values, end.values

    def label_at(t: float) -> str:
        return _predicted_label(predict(a + (b - a) * t))

    ts = np.linspace(0.0, 1.0, steps + 1)
    labels = [label_at(t) for t in ts]
    transitions = []
    for (t0, l0), (t1, l1) in zip(zip(ts, labels), zip(ts[1:], labels[1:])):
        if l0 == l1:
            continue
        lo, hi = float(t0), float(t1)
        lab_hi = l1
        while hi - lo > tol:
            mid = (lo + hi) / 2.0
            if label_at(mid) == l0:
                lo = mid
            else:
                hi = mid
                lab_hi = label_at(mid) if hi != t1 else l1
        transitions.append(((lo + hi) / 2.0, l0, lab_hi))
    return transitions


@dataclass(frozen=True)
class Proposal:
    genotype: Genotype
    strategy: str
    provenance: dict = field(default_factory=dict)
    predicted: Optional[object] = None  # Prediction or float score

    def as_dict(self) -> dict:
        pred = self.predicted
        if isinstance(pred, Prediction):
            pred = pred.as_dict()
        return {
            "genotype": self.genotype.values.tolist(),
            "strategy": self.strategy,
            "provenance": self.provenance,
            "predicted": pred,
        }


def _check_bounds(bounds) -> np.ndarray:
    b = np.asarray(bounds, dtype=np.float64)
    if b.shape != (GENOTYPE_DIM, 2) or np.any(b[:, 0] > b[:, 1]):
        raise DataError(f"invalid bounds (need ({GENOTYPE_DIM}, 2) with lo <= hi)")
    return b


def propose_random(n: int, bounds=UNIT_BOUNDS, seed: int = 0) -> list[Proposal]:
    """n uniform samples within bounds, seeded per index."""
    if n < 1:
        raise DataError("n must be >= 1")
    b = _check_bounds(bounds)
    proposals = []
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        g = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random(GENOTYPE_DIM)
        proposals.append(
            Proposal(
                genotype=Genotype(g, bounds=b),
                strategy="random",
                provenance={"seed": seed, "index": i},
            )
        )
    return proposals


def _fitness_weights(parents: Sequence[Specimen]) -> np.ndarray:
    # score-0 failures and unrated parents keep weight 1 so they stay
    # selectable when nothing better exists
    return np.array([max(s.score or 0, 1) for s in parents], dtype=np.float64)


def propose_mutation(
    parents: Sequence[Specimen],
    sigma: float,
    n: int,
    seed: int = 0,
    bounds=None,
) -> list[Proposal]:
    """Gaussian mutation around fitness-weighted parents.

    Per-dimension noise scale is sigma times the bound range; children
    are clamped into bounds.
    """
    if not parents:
        raise DataError("need at least one parent")
    if sigma < 0:
        raise DataError("sigma must be >= 0")
    b = _check_bounds(bounds if bounds is not None else _parent_bounds(parents))
    weights = _fitness_weights(parents)
    probs = weights / weights.sum()
    span = b[:, 1] - b[:, 0]
    proposals = []
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        pick = int(rng.choice(len(parents), p=probs))
        parent = parents[pick]
        child = parent.genotype.values + rng.normal(0.0, 1.0, GENOTYPE_DIM) * sigma * span
        child = np.clip(child, b[:, 0], b[:, 1])
        proposals.append(
            Proposal(
                genotype=Genotype(child, bounds=b),
                strategy="mutation",
                provenance={"seed": seed, "index": i, "parents": [parent.id], "sigma": sigma},
            )
        )
    return proposals


def _parent_bounds(parents: Sequence[Specimen]) -> np.ndarray:
    declared = [s.genotype.bounds for s in parents if s.genotype.bounds is not None]
    if declared:
        return declared[0]
    return UNIT_BOUNDS


def propose_crossover(
    parents: Sequence[Specimen], n: int, seed: int = 0, bounds=None
) -> list[Proposal]:
    """Uniform per-gene crossover of two distinct fitness-weighted parents."""
    if len(parents) < 2:
        raise DataError("crossover needs at least two parents")
    b = _check_bounds(bounds if bounds is not None else _parent_bounds(parents))
    weights = _fitness_weights(parents)
    proposals = []
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        probs = weights / weights.sum()
        first = int(rng.choice(len(parents), p=probs))
        rest = np.delete(np.arange(len(parents)), first)
        w_rest = weights[rest] / weights[rest].sum()
        second = int(rng.choice(rest, p=w_rest))
        mask = rng.random(GENOTYPE_DIM) < 0.5
        child = np.where(mask, parents[first].genotype.values, parents[second].genotype.values)
        proposals.append(
            Proposal(
                genotype=Genotype(child, bounds=b),
                strategy="crossover",
                provenance={
                    "seed": seed,
                    "index": i,
                    "parents": [parents[first].id, parents[second].id],
                },
            )
        )
    return proposals


def propose_montecarlo(
    model,
    n: int,
    bounds=UNIT_BOUNDS,
    min_predicted_score: float = 5.0,
    seed: int = 0,
    max_attempts: int = 100_000,
    required_category: Optional[str] = None,
) -> tuple[list[Proposal], dict]:
    """Rejection sampling over uniform candidates.

    Default filter keeps candidates whose predicted score reaches the
    threshold; passing ``required_category`` switches to the
    category-constrained variant, keeping candidates whose predicted
    label matches.  Returns (proposals, stats); a partial result plus a
    warning when max_attempts runs out.
    """
    if n < 1:
        raise DataError("n must be >= 1")
    predict = _as_predict_fn(model)
    b = _check_bounds(bounds)
    proposals: list[Proposal] = []
    attempts = 0
    index = 0
    while len(proposals) < n and attempts < max_attempts:
        rng = np.random.default_rng((seed, index))
        index += 1
        attempts += 1
        g = b[:, 0] + (b[:, 1] - b[:, 0]) * rng.random(GENOTYPE_DIM)
        out = predict(g)
        if required_category is not None:
            keep = _predicted_label(out) == required_category
            filter_note = {"required_category": required_category}
        else:
            keep = _predicted_score(out) >= min_predicted_score
            filter_note = {"min_predicted_score": min_predicted_score}
        if keep:
            proposals.append(
                Proposal(
                    genotype=Genotype(g, bounds=b),
                    strategy="montecarlo",
                    provenance={"seed": seed, "index": index - 1, **filter_note},
                    predicted=out,
                )
            )
    stats = {
        "kept": len(proposals),
        "attempted": attempts,
        "acceptance_rate": len(proposals) / attempts if attempts else 0.0,
    }
    if len(proposals) < n:
        warnings.warn(
            f"montecarlo kept only {len(proposals)}/{n} proposals "
            f"after {attempts} attempts"
        )
    return proposals, stats


class GeneratorPlugin(Protocol):
    """A phenotype generator: renders a genotype to a raster in [0, 1]."""

    name: str
    deterministic: bool

    def render(self, genotype: Genotype) -> np.ndarray: ...


@dataclass(frozen=True)
class ToyGenerator:
    """Superposed-wave pattern generator over the unit genotype box.

    g0 amplitude, g1/g2 wave frequencies, g3 orientation, g4 anisotropy,
    g5 ring weight, g6 interference, g7 threshold level, g8 threshold
    sharpness, g9 vignette radius, g10 detail frequency, g11 phase.
    """

    name: str = "toy"
    deterministic: bool = True
    size: int = TOY_SIZE

    def render(self, genotype: Genotype) -> np.ndarray:
        g = genotype.values
        if np.any(g < 0.0) or np.any(g > 1.0):
            raise DataError("toy generator expects a genotype inside [0, 1]^12")
        return toy_generate(g, size=self.size)


def toy_generate(genotype, size: int = TOY_SIZE) -> np.ndarray:
    """Deterministic grayscale raster for a 12-d genotype in [0, 1]."""
    g = np.asarray(genotype, dtype=np.float64)
    if g.shape != (GENOTYPE_DIM,):
        raise DataError(f"genotype must have {GENOTYPE_DIM} values")
    if np.any(g < 0.0) or np.any(g > 1.0):
        raise DataError("toy generator expects values in [0, 1]")
    lin = np.linspace(-1.0, 1.0, size)
    X, Y = np.meshgrid(lin, lin)
    theta = g[3] * np.pi
    U = np.cos(theta) * X + np.sin(theta) * Y
    V = -np.sin(theta) * X + np.cos(theta) * Y
    U = U * (1.0 + 3.0 * g[4])
    f1 = 2.0 + 22.0 * g[1]
    f2 = 2.0 + 22.0 * g[2]
    phase = 2.0 * np.pi * g[11]
    waves = np.sin(np.pi * f1 * U + phase) + np.sin(np.pi * f2 * V)
    rings = np.sin(np.pi * (f1 + f2) * 0.5 * np.sqrt(X * X + Y * Y) + phase)
    interference = np.sin(np.pi * f1 * U + phase) * np.sin(np.pi * f2 * V)
    field = (1.0 - g[5]) * waves * 0.5 + g[5] * rings + g[6] * interference
    detail = 0.25 * g[10] * np.sin(np.pi * (8.0 + 40.0 * g[10]) * (X + Y))
    field = field + detail
    sharpness = 2.0 + 30.0 * g[8]
    level = -0.8 + 1.6 * g[7]
    soft = 1.0 / (1.0 + np.exp(-sharpness * (field - level)))
    r = np.sqrt(X * X + Y * Y)
    radius = 0.25 + 0.75 * g[9]
    vignette = np.clip((radius - r) / 0.15 + 0.5, 0.0, 1.0)
    return np.clip(g[0] * soft * vignette, 0.0, 1.0)


_GENERATORS: dict[str, GeneratorPlugin] = {}


def register_generator(plugin: GeneratorPlugin) -> None:
    _GENERATORS[plugin.name] = plugin


def get_generator(name: str) -> GeneratorPlugin:
    try:
        return _GENERATORS[name]
    except KeyError:
        raise DataError(f"unknown generator {name!r}") from None


register_generator(ToyGenerator())
