"""Small neural-network kernel shared by the feature head and the
genotype predictor.

Layers are explicit numpy affine transforms with ReLU; training is plain
SGD with momentum under a one-cycle learning-rate policy, fully
deterministic for a given seed.  Models persist as a JSON header followed
by a little-endian float32 parameter block.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import DataError

OUTPUT_KINDS = ("softmax_classifier", "scalar_regressor")
MODEL_MAGIC = b"SSM1"

WARMUP_FRACTION = 0.25
LR_START_DIV = 25.0
LR_FINAL_DIV = 1e4


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    hidden: tuple[int, ...]
    output_dim: int
    output_kind: str = "softmax_classifier"

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))
        if self.output_kind not in OUTPUT_KINDS:
            raise DataError(f"unknown output kind {self.output_kind!r}")
        if self.input_dim < 1 or self.output_dim < 1 or any(h < 1 for h in self.hidden):
            raise DataError("all layer widths must be >= 1")

    @property
    def widths(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden, self.output_dim)

    def as_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden": list(self.hidden),
            "output_dim": self.output_dim,
            "output_kind": self.output_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpSpec":
        return cls(d["input_dim"], tuple(d["hidden"]), d["output_dim"], d["output_kind"])


@dataclass(frozen=True)
class TrainSchedule:
    phases: tuple[tuple[int, float], ...]  # (epochs, lr_max) per phase
    batch_size: int = 64
    seed: int = 0
    momentum_range: tuple[float, float] = (0.85, 0.95)

    def __post_init__(self):
        phases = tuple((int(e), float(lr)) for e, lr in self.phases)
        object.__setattr__(self, "phases", phases)
        if not phases:
            raise DataError("schedule needs at least one phase")
        for epochs, lr_max in phases:
            if epochs < 1:
                raise DataError(f"epochs must be >= 1, got {epochs}")
            if lr_max <= 0:
                raise DataError(f"lr_max must be positive, got {lr_max}")
        if self.batch_size < 1:
            raise DataError("batch_size must be >= 1")

    def as_dict(self) -> dict:
        return {
            "phases": [list(p) for p in self.phases],
            "batch_size": self.batch_size,
            "seed": self.seed,
            "momentum_range": list(self.momentum_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainSchedule":
        return cls(
            tuple(tuple(p) for p in d["phases"]),
            d["batch_size"],
            d["seed"],
            tuple(d["momentum_range"]),
        )


def init_params(spec: MlpSpec, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Seeded He-style uniform init: W ~ U(+-sqrt(6/fan_in)), b = 0."""
    rng = np.random.default_rng(seed)
    params = []
    widths = spec.widths
    for fan_in, fan_out in zip(widths, widths[1:]):
        limit = np.sqrt(6.0 / fan_in)
        W = rng.uniform(-limit, limit, size=(fan_in, fan_out))
        params.append((W, np.zeros(fan_out)))
    return params


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _forward_cached(spec, params, X):
    """Forward pass keeping pre-activations and activations for backprop."""
    acts = [X]
    z = X
    for i, (W, b) in enumerate(params):
        z = acts[-1] @ W + b
        if i < len(params) - 1:
            acts.append(np.maximum(z, 0.0))
    if spec.output_kind == "softmax_classifier":
        out = softmax(z)
    else:
        out = z
    return out, z, acts


def mlp_forward(spec: MlpSpec, params, x) -> np.ndarray:
    """Network output for a single input vector or a batch."""
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.shape[1] != spec.input_dim:
        raise DataError(f"input dim {X.shape[1]} != spec {spec.input_dim}")
    out, _, _ = _forward_cached(spec, params, X)
    return out[0] if single else out


def batch_loss(spec: MlpSpec, params, X, y) -> float:
    """Mean loss over a batch: cross-entropy or squared error."""
    out, _, _ = _forward_cached(spec, params, np.asarray(X, dtype=np.float64))
    if spec.output_kind == "softmax_classifier":
        idx = np.asarray(y, dtype=int)
        p = np.clip(out[np.arange(len(idx)), idx], 1e-300, None)
        return float(-np.mean(np.log(p)))
    return float(np.mean((out.ravel() - np.asarray(y, dtype=np.float64)) ** 2))


def mlp_backward(spec: MlpSpec, params, X, y):
    """Exact gradients of the mean batch loss for every (W, b)."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    out, z_out, acts = _forward_cached(spec, params, X)
    if spec.output_kind == "softmax_classifier":
        idx = np.asarray(y, dtype=int)
        delta = out.copy()
        delta[np.arange(n), idx] -= 1.0
        delta /= n
    else:
        delta = 2.0 * (out - np.asarray(y, dtype=np.float64).reshape(out.shape)) / n
    grads: list[tuple[np.ndarray, np.ndarray]] = [None] * len(params)
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (acts[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (acts[i] > 0.0)
    return grads


def one_cycle_lr(step: int, total_steps: int, lr_max: float) -> float:
    """Cosine one-cycle: lr_max/25 -> lr_max over the first quarter of the
    steps, then anneal to lr_max/1e4 by the final step."""
    if not 0 <= step < total_steps:
        raise DataError(f"step {step} outside [0, {total_steps})")
    if total_steps == 1:
        return lr_max
    warm = WARMUP_FRACTION * total_steps
    start = lr_max / LR_START_DIV
    final = lr_max / LR_FINAL_DIV
    if step <= warm:
        t = step / warm
        return start + (lr_max - start) * 0.5 * (1.0 - np.cos(np.pi * t))
    t = (step - warm) / (total_steps - 1 - warm)
    return final + (lr_max - final) * 0.5 * (1.0 + np.cos(np.pi * t))


def one_cycle_momentum(step: int, total_steps: int, momentum_range=(0.85, 0.95)) -> float:
    """Momentum inverse-cycled against the learning rate: highest at the
    ends of the cycle, lowest at the lr peak."""
    if not 0 <= step < total_steps:
        raise DataError(f"step {step} outside [0, {total_steps})")
    m_lo, m_hi = momentum_range
    if total_steps == 1:
        return m_lo
    warm = WARMUP_FRACTION * total_steps
    if step <= warm:
        t = step / warm
        return m_hi + (m_lo - m_hi) * 0.5 * (1.0 - np.cos(np.pi * t))
    t = (step - warm) / (total_steps - 1 - warm)
    return m_hi + (m_lo - m_hi) * 0.5 * (1.0 + np.cos(np.pi * t))


@dataclass
class EvalReport:
    accuracy: float
    rmse: float
    confusion: np.ndarray  # rows = truth, cols = prediction
    per_quartile_accuracy: np.ndarray  # most-confident quartile first
    n: int

    def as_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "rmse": self.rmse,
            "confusion": self.confusion.tolist(),
            "per_quartile_accuracy": self.per_quartile_accuracy.tolist(),
            "n": self.n,
        }


def expectation_decode(probs: np.ndarray) -> np.ndarray:
    """Probability-weighted expectation over ordinal class indices."""
    k = probs.shape[-1]
    return probs @ np.arange(k, dtype=np.float64)


def confidence_margin(probs: np.ndarray) -> np.ndarray:
    """Top-1 minus top-2 probability per row."""
    part = np.sort(probs, axis=-1)
    return part[..., -1] - part[..., -2] if probs.shape[-1] > 1 else np.ones(len(probs))


def most_confused_pairs(confusion: np.ndarray, labels, top: int = 2):
    """Unordered label pairs by symmetric off-diagonal confusion mass,
    largest first; the usual first stop when reading a report."""
    pairs = []
    for i in range(len(labels)):
        for j in range(i + 1, len(labels)):
            count = int(confusion[i, j] + confusion[j, i])
            if count:
                pairs.append(((labels[i], labels[j]), count))
    pairs.sort(key=lambda t: (-t[1], t[0]))
    return pairs[:top] if top else pairs


def evaluate(params, spec: MlpSpec, val_set) -> EvalReport:
    """Accuracy, confusion, expectation-decoded RMSE and confidence
    quartile accuracies on a validation set (X, y)."""
    X, y = val_set
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty validation set")
    if spec.output_kind == "scalar_regressor":
        pred = mlp_forward(spec, params, X).ravel()
        y_f = np.asarray(y, dtype=np.float64)
        rmse = float(np.sqrt(np.mean((pred - y_f) ** 2)))
        return EvalReport(float("nan"), rmse, np.zeros((0, 0), dtype=int), np.full(4, np.nan), len(X))
    probs = mlp_forward(spec, params, X)
    idx = np.asarray(y, dtype=int)
    pred = probs.argmax(axis=1)
    k = spec.output_dim
    confusion = np.zeros((k, k), dtype=int)
    np.add.at(confusion, (idx, pred), 1)
    accuracy = float(np.trace(confusion) / len(idx))
    rmse = float(np.sqrt(np.mean((expectation_decode(probs) - idx) ** 2)))
    conf = confidence_margin(probs)
    order = np.lexsort((np.arange(len(conf)), -conf))
    quartiles = np.array_split(order, 4)
    per_q = np.array(
        [float(np.mean(pred[q] == idx[q])) if len(q) else float("nan") for q in quartiles]
    )
    return EvalReport(accuracy, rmse, confusion, per_q, len(idx))


def train(
    spec: MlpSpec,
    schedule: TrainSchedule,
    train_set,
    val_set=None,
) -> tuple[list, list[EvalReport]]:
    """Train with SGD+momentum under a one-cycle policy per phase.

    Deterministic for a given schedule seed: weight init and per-epoch
    shuffle orders are drawn from one seeded generator.  Returns the
    trained parameters and one validation report per phase (empty when no
    validation set is given).
    """
    X, y = train_set
    X = np.asarray(X, dtype=np.float64)
    if len(X) == 0:
        raise DataError("empty training set")
    if spec.output_kind == "softmax_classifier":
        idx = np.asarray(y, dtype=int)
        if idx.min() < 0 or idx.max() >= spec.output_dim:
            raise DataError(
                f"labels outside [0, {spec.output_dim}): {idx.min()}..{idx.max()}"
            )
        y_arr = idx
    else:
        y_arr = np.asarray(y, dtype=np.float64)
    params = init_params(spec, schedule.seed)
    shuffle_rng = np.random.default_rng(schedule.seed + 1)
    n = len(X)
    bs = min(schedule.batch_size, n)
    steps_per_epoch = (n + bs - 1) // bs
    reports: list[EvalReport] = []
    for epochs, lr_max in schedule.phases:
        total_steps = epochs * steps_per_epoch
        velocity = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        step = 0
        for _ in range(epochs):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, bs):
                batch = order[start : start + bs]
                grads = mlp_backward(spec, params, X[batch], y_arr[batch])
                lr = one_cycle_lr(step, total_steps, lr_max)
                mom = one_cycle_momentum(step, total_steps, schedule.momentum_range)
                new_params = []
                new_velocity = []
                for (W, b), (vW, vb), (gW, gb) in zip(params, velocity, grads):
                    vW = mom * vW - lr * gW
                    vb = mom * vb - lr * gb
                    new_params.append((W + vW, b + vb))
                    new_velocity.append((vW, vb))
                params = new_params
                velocity = new_velocity
                step += 1
        if val_set is not None and len(val_set[0]):
            reports.append(evaluate(params, spec, val_set))
    return params, reports


@dataclass
class PredictorModel:
    """A trained predictor: network, label vocabulary and the input
    normalization it was fitted with."""

    spec: MlpSpec
    params: list
    labels: list[str]  # class label per output index
    target: str  # "category" or "score"
    schedule: Optional[TrainSchedule] = None
    normalization: Optional[np.ndarray] = None  # (d, 2) of [lo, hi]
    metrics: dict = field(default_factory=dict)

    def normalize(self, X: np.ndarray) -> np.ndarray:
        if self.normalization is None:
            return X
        lo = self.normalization[:, 0]
        span = self.normalization[:, 1] - lo
        span = np.where(span == 0.0, 1.0, span)
        return (np.asarray(X, dtype=np.float64) - lo) / span

    def predict_proba(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        out = mlp_forward(self.spec, self.params, self.normalize(np.atleast_2d(X)))
        return out[0] if single else out


def flatten_params(params) -> np.ndarray:
    return np.concatenate([np.concatenate([W.ravel(), b.ravel()]) for W, b in params])


def unflatten_params(spec: MlpSpec, flat: np.ndarray) -> list:
    params = []
    pos = 0
    widths = spec.widths
    for fan_in, fan_out in zip(widths, widths[1:]):
        W = flat[pos : pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos : pos + fan_out]
        pos += fan_out
        params.append((W.astype(np.float64), b.astype(np.float64)))
    if pos != len(flat):
        raise DataError(f"parameter block size {len(flat)} != expected {pos}")
    return params


def save_model(model: PredictorModel, path) -> None:
    """Versioned binary: magic, u32 header length, JSON header, then the
    flattened parameters as little-endian float32."""
    header = {
        "spec": model.spec.as_dict(),
        "schedule": model.schedule.as_dict() if model.schedule else None,
        "labels": model.labels,
        "target": model.target,
        "normalization": model.normalization.tolist() if model.normalization is not None else None,
        "metrics": model.metrics,
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    flat = flatten_params(model.params).astype("<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(blob)))
        fh.write(blob)
        fh.write(flat)


def load_model(path) -> PredictorModel:
    path = Path(path)
    raw = path.read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise DataError(f"{path} is not a model file")
    (hlen,) = struct.unpack("<I", raw[4:8])
    header = json.loads(raw[8 : 8 + hlen].decode("utf-8"))
    flat = np.frombuffer(raw[8 + hlen :], dtype="<f4").astype(np.float64)
    spec = MlpSpec.from_dict(header["spec"])
    norm = header.get("normalization")
    return PredictorModel(
        spec=spec,
        params=unflatten_params(spec, flat),
        labels=header["labels"],
        target=header["target"],
        schedule=TrainSchedule.from_dict(header["schedule"]) if header.get("schedule") else None,
        normalization=np.array(norm) if norm is not None else None,
        metrics=header.get("metrics", {}),
    )
