"""Local training, aggregation weighting, and model evaluation.

The model family is a dense softmax classifier (optionally with one tanh
hidden layer); the protocol is architecture-agnostic, so this keeps the
simulator fast while exercising real gradients. Aggregation weights come
either from dataset sizes (FedAvg) or from each miner's label-distribution
divergence against the publisher's reference histogram.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import Dataset, smooth_histogram
from .errors import (
    AggregationShapeError,
    NonFiniteLossError,
    TrainingDivergedError,
    UndefinedDivergenceError,
)


@dataclass(frozen=True)
class Architecture:
    n_features: int
    n_classes: int
    hidden: tuple[int, ...] = ()

    def __post_init__(self):
        if len(self.hidden) > 1:
            raise ValueError("at most one hidden layer is supported")

    @property
    def n_weights(self) -> int:
        if not self.hidden:
            return self.n_features * self.n_classes + self.n_classes
        h = self.hidden[0]
        return self.n_features * h + h + h * self.n_classes + self.n_classes


@dataclass
class TrainConfig:
    lr: float = 0.5
    epochs: int = 1
    batch_size: int = 32
    round_index: int = 0
    target: float = 0.90

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if not 0 < self.target <= 1:
            raise ValueError("accuracy target must be in (0, 1]")


class DenseClassifier:
    """Flat-weight softmax classifier used by miners and baselines."""

    def __init__(self, arch: Architecture, weights: np.ndarray | None = None, seed: int = 0):
        self.arch = arch
        if weights is None:
            rng = np.random.default_rng(seed)
            weights = rng.normal(0.0, 0.01, size=arch.n_weights)
        if weights.shape != (arch.n_weights,):
            raise AggregationShapeError(
                f"expected {arch.n_weights} weights, got {weights.shape}"
            )
        self.weights = np.asarray(weights, dtype=np.float64)

    def clone(self, weights: np.ndarray | None = None) -> "DenseClassifier":
        w = self.weights.copy() if weights is None else np.asarray(weights, dtype=np.float64)
        return DenseClassifier(self.arch, w)

    def _unpack(self):
        a = self.arch
        if not a.hidden:
            split = a.n_features * a.n_classes
            w = self.weights[:split].reshape(a.n_features, a.n_classes)
            b = self.weights[split:]
            return (w, b)
        h = a.hidden[0]
        idx = 0
        w1 = self.weights[idx : idx + a.n_features * h].reshape(a.n_features, h)
        idx += a.n_features * h
        b1 = self.weights[idx : idx + h]
        idx += h
        w2 = self.weights[idx : idx + h * a.n_classes].reshape(h, a.n_classes)
        idx += h * a.n_classes
        b2 = self.weights[idx:]
        return (w1, b1, w2, b2)

    def _forward(self, x: np.ndarray):
        params = self._unpack()
        if len(params) == 2:
            w, b = params
            return x @ w + b, None
        w1, b1, w2, b2 = params
        hidden = np.tanh(x @ w1 + b1)
        return hidden @ w2 + b2, hidden

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self._forward(x)
        logits = logits - logits.max(axis=1, keepdims=True)
        expl = np.exp(logits)
        return expl / expl.sum(axis=1, keepdims=True)

    def predict(self, x: np.ndarray) -> np.ndarray:
        logits, _ = self._forward(x)
        return logits.argmax(axis=1)

    def loss(self, x: np.ndarray, y: np.ndarray) -> float:
        """Cross-entropy summed over the samples."""
        logits, _ = self._forward(x)
        shifted = logits - logits.max(axis=1, keepdims=True)
        log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
        return float(-log_probs[np.arange(len(y)), y].sum())

    def loss_grad(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Gradient of the summed cross-entropy w.r.t. the flat weights."""
        probs = self.predict_proba(x)
        dlogits = probs.copy()
        dlogits[np.arange(len(y)), y] -= 1.0
        params = self._unpack()
        if len(params) == 2:
            gw = x.T @ dlogits
            gb = dlogits.sum(axis=0)
            return np.concatenate([gw.ravel(), gb])
        w1, b1, w2, b2 = params
        hidden = np.tanh(x @ w1 + b1)
        gw2 = hidden.T @ dlogits
        gb2 = dlogits.sum(axis=0)
        dhidden = dlogits @ w2.T
        dz = dhidden * (1.0 - hidden * hidden)
        gw1 = x.T @ dz
        gb1 = dz.sum(axis=0)
        return np.concatenate([gw1.ravel(), gb1, gw2.ravel(), gb2])


def local_loss(model: DenseClassifier, dataset: Dataset) -> float:
    """Summed cross-entropy of the model over a miner's dataset."""
    if not np.all(np.isfinite(model.weights)):
        raise NonFiniteLossError("model weights contain NaN or infinity")
    value = model.loss(dataset.x, dataset.y)
    if not np.isfinite(value):
        raise NonFiniteLossError(f"loss evaluated to {value}")
    return value


def sgd_step(weights: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
    """One gradient-descent update: w - lr * grad."""
    return weights - lr * grad


def local_train(
    model: DenseClassifier, dataset: Dataset, cfg: TrainConfig, seed: int = 0
) -> DenseClassifier:
    """Mini-batch gradient descent for `cfg.epochs` passes over the dataset.

    Batch gradients are means, so the learning rate is batch-size stable.
    Deterministic for a given seed.
    """
    rng = np.random.default_rng(seed)
    weights = model.weights.copy()
    n = len(dataset)
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            batch = order[start : start + cfg.batch_size]
            trained = model.clone(weights)
            grad = trained.loss_grad(dataset.x[batch], dataset.y[batch]) / len(batch)
            weights = sgd_step(weights, grad, cfg.lr)
        if not np.all(np.isfinite(weights)):
            raise TrainingDivergedError("weights became non-finite during training")
    return model.clone(weights)


def gradient_check(model: DenseClassifier, dataset: Dataset, h: float = 1e-4) -> float:
    """Max relative error between analytic and central finite-difference gradients.

    The error is normalized by the largest finite-difference component, so a
    correct gradient scores near machine precision and a misscaled one near 1.
    """
    analytic = model.loss_grad(dataset.x, dataset.y)
    fd = np.empty_like(analytic)
    base = model.weights
    for i in range(base.shape[0]):
        probe = base.copy()
        probe[i] = base[i] + h
        up = model.clone(probe).loss(dataset.x, dataset.y)
        probe[i] = base[i] - h
        down = model.clone(probe).loss(dataset.x, dataset.y)
        fd[i] = (up - down) / (2.0 * h)
    scale = max(float(np.max(np.abs(fd))), 1e-12)
    return float(np.max(np.abs(analytic - fd)) / scale)


def fedavg_weights(sizes: Sequence[int]) -> np.ndarray:
    """Dataset-size-proportional aggregation weights."""
    sizes = np.asarray(sizes, dtype=np.float64)
    return sizes / sizes.sum()


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL divergence in bits between two label histograms.

    Both inputs are expected smoothed (strictly positive where compared);
    a zero in `q` where `p` is positive is rejected.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    support = p > 0
    if np.any(q[support] == 0):
        raise UndefinedDivergenceError("reference histogram has a zero on p's support")
    return float(np.sum(p[support] * np.log2(p[support] / q[support])))


def kl_weights(
    histograms: Sequence[np.ndarray],
    reference: np.ndarray,
    sizes: Sequence[int],
) -> np.ndarray:
    """Divergence-based aggregation weights: max(0, 1 - D_KL(d_i || d_ref)).

    The raw factors are clamped at zero and normalized; when every miner
    clamps to zero the weights fall back to FedAvg's size proportions.
    """
    raw = np.array(
        [max(0.0, 1.0 - kl_divergence(h, reference)) for h in histograms]
    )
    total = raw.sum()
    if total == 0.0:
        return fedavg_weights(sizes)
    return raw / total


def aggregate(vectors: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    """Weighted elementwise combination of flat weight vectors."""
    shapes = {v.shape for v in vectors}
    if len(shapes) != 1:
        raise AggregationShapeError(f"mismatched vector shapes: {shapes}")
    if len(vectors) != len(weights):
        raise AggregationShapeError(
            f"{len(vectors)} vectors but {len(weights)} weights"
        )
    stacked = np.stack(vectors)
    return np.asarray(weights, dtype=np.float64) @ stacked


def evaluate(model: DenseClassifier, dataset: Dataset) -> float:
    """Fraction of argmax-correct predictions."""
    return float(np.mean(model.predict(dataset.x) == dataset.y))


@dataclass
class RoundMetrics:
    round: int
    pool: int
    accuracy: float
    loss: float
    sim_time_ms: float


def write_metrics(path: str, rows: Sequence[RoundMetrics]) -> None:
    """Append-style metrics CSV: round,pool,accuracy,loss,sim_time_ms."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("round,pool,accuracy,loss,sim_time_ms\n")
        for r in rows:
            fh.write(f"{r.round},{r.pool},{r.accuracy:.6f},{r.loss:.6f},{r.sim_time_ms:.3f}\n")
