"""Minimal dense-MLP engine.

ReLU hidden layers, softmax cross-entropy with analytic gradients,
sign-controlled SGD steps, KL divergence, and a seeded training loop with
per-epoch hooks. Everything is value-like: operations return new models
instead of mutating their arguments.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import ConfigError, LabelError, ShapeError, TrainingDivergedError

KL_EPS = 1e-12


@dataclass
class MlpModel:
    """Dense MLP: weights[k] has shape layer_dims[k+1] x layer_dims[k]."""

    layer_dims: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    @property
    def input_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def num_classes(self) -> int:
        return self.layer_dims[-1]

    def num_params(self) -> int:
        return sum(w.size for w in self.weights) + sum(b.size for b in self.biases)

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
        )


@dataclass
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.01
    batch_size: int = 64
    seed: int = 0
    validation_fraction: float = 0.1

    def validate(self) -> None:
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if not 0 <= self.validation_fraction < 1:
            raise ConfigError(
                f"validation_fraction must be in [0,1), got {self.validation_fraction}"
            )


@dataclass
class GradientSet:
    """Per-layer gradients, shape-congruent with an MlpModel."""

    weight_grads: list[np.ndarray]
    bias_grads: list[np.ndarray]


@dataclass
class EpochMetrics:
    epoch: int
    train_acc: float = 0.0
    val_acc: float = 0.0
    test_acc: float = 0.0
    forget_acc: float = 0.0
    retain_acc: float = 0.0
    mean_loss: float = 0.0


def mlp_init(layer_dims: Sequence[int], seed: int) -> MlpModel:
    """Create an MLP with uniform Glorot-style weights and zero biases.

    Deterministic under seed: same dims + seed give bit-identical tensors.
    """
    dims = list(layer_dims)
    if len(dims) < 2:
        raise ShapeError(f"need at least input and output dims, got {dims}")
    if any(d < 1 for d in dims):
        raise ShapeError(f"all layer dims must be positive, got {dims}")
    rng = np.random.default_rng(seed)
    weights = []
    biases = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(layer_dims=dims, weights=weights, biases=biases)


def _forward_cached(model: MlpModel, features: np.ndarray):
    """Forward pass keeping pre-activations and activations for backprop."""
    x = np.asarray(features, dtype=float)
    if x.ndim != 2 or x.shape[1] != model.input_dim:
        raise ShapeError(
            f"features shape {x.shape} incompatible with input dim {model.input_dim}"
        )
    activations = [x]
    pre_acts = []
    a = x
    n_layers = len(model.weights)
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        pre_acts.append(z)
        a = z if k == n_layers - 1 else np.maximum(z, 0.0)
        activations.append(a)
    return pre_acts, activations


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))


def forward(model: MlpModel, features: np.ndarray) -> np.ndarray:
    """Class posteriors, one softmax row per sample."""
    _, activations = _forward_cached(model, features)
    return _softmax(activations[-1])


def loss_and_grad(
    model: MlpModel,
    features: np.ndarray,
    labels: Optional[np.ndarray] = None,
    soft_targets: Optional[np.ndarray] = None,
) -> tuple[float, GradientSet]:
    """Mean softmax cross-entropy and its exact analytic gradients.

    Targets are either integer labels or per-sample soft distributions
    (exactly one of the two must be given).
    """
    x = np.asarray(features, dtype=float)
    if np.isnan(x).any():
        raise ValueError("features contain NaN")
    if (labels is None) == (soft_targets is None):
        raise ValueError("provide exactly one of labels or soft_targets")

    pre_acts, activations = _forward_cached(model, x)
    logits = activations[-1]
    n, n_classes = logits.shape

    if labels is not None:
        y = np.asarray(labels)
        if y.shape != (n,):
            raise ShapeError(f"labels shape {y.shape} does not match {n} samples")
        if y.min() < 0 or y.max() >= n_classes:
            raise LabelError(
                f"labels must lie in [0, {n_classes}), got range [{y.min()}, {y.max()}]"
            )
        targets = np.zeros((n, n_classes))
        targets[np.arange(n), y] = 1.0
    else:
        targets = np.asarray(soft_targets, dtype=float)
        if targets.shape != logits.shape:
            raise ShapeError(
                f"soft targets shape {targets.shape} does not match logits {logits.shape}"
            )

    log_probs = _log_softmax(logits)
    mean_loss = float(-(targets * log_probs).sum() / n)

    probs = np.exp(log_probs)
    delta = (probs - targets) / n
    weight_grads: list[np.ndarray] = [None] * len(model.weights)  # type: ignore[list-item]
    bias_grads: list[np.ndarray] = [None] * len(model.biases)  # type: ignore[list-item]
    for k in range(len(model.weights) - 1, -1, -1):
        weight_grads[k] = delta.T @ activations[k]
        bias_grads[k] = delta.sum(axis=0)
        if k > 0:
            delta = (delta @ model.weights[k]) * (pre_acts[k - 1] > 0)
    return mean_loss, GradientSet(weight_grads, bias_grads)


def apply_step(
    model: MlpModel, grads: GradientSet, learning_rate: float, direction: str = "descend"
) -> MlpModel:
    """One SGD step: params -/+ lr * grad for descend/ascend."""
    if direction not in ("descend", "ascend"):
        raise ConfigError(f"direction must be 'descend' or 'ascend', got {direction!r}")
    if learning_rate <= 0:
        raise ConfigError(f"learning_rate must be > 0, got {learning_rate}")
    sign = -1.0 if direction == "descend" else 1.0
    weights = []
    biases = []
    for w, b, gw, gb in zip(model.weights, model.biases, grads.weight_grads, grads.bias_grads):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ShapeError(
                f"gradient shapes {gw.shape}/{gb.shape} do not match params {w.shape}/{b.shape}"
            )
        weights.append(w + sign * learning_rate * gw)
        biases.append(b + sign * learning_rate * gb)
    return MlpModel(layer_dims=list(model.layer_dims), weights=weights, biases=biases)


def evaluate_accuracy(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    """Fraction of samples whose argmax posterior matches the label.

    Ties break toward the lowest class index.
    """
    y = np.asarray(labels)
    if len(y) == 0:
        raise ValueError("evaluation set is empty")
    probs = forward(model, features)
    preds = probs.argmax(axis=1)
    return float((preds == y).mean())


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """KL(p || q) with an epsilon floor inside the log."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"distribution lengths differ: {p.shape} vs {q.shape}")
    for name, v in (("p", p), ("q", q)):
        if v.min() < 0 or abs(v.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} is not a probability distribution")
    return float(np.sum(p * np.log((p + KL_EPS) / (q + KL_EPS))))


def mean_kl(p_rows: np.ndarray, q_rows: np.ndarray) -> float:
    """Row-wise mean KL(p || q) over matched distribution matrices."""
    p = np.asarray(p_rows, dtype=float)
    q = np.asarray(q_rows, dtype=float)
    if p.shape != q.shape:
        raise ShapeError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    return float(np.sum(p * np.log((p + KL_EPS) / (q + KL_EPS)), axis=1).mean())


def sgd_epoch(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    learning_rate: float,
    batch_size: int,
    rng: np.random.Generator,
    direction: str = "descend",
) -> tuple[MlpModel, float]:
    """One shuffled mini-batch pass; returns the updated model and mean loss."""
    n = len(labels)
    perm = rng.permutation(n)
    total = 0.0
    for start in range(0, n, batch_size):
        idx = perm[start : start + batch_size]
        loss, grads = loss_and_grad(model, features[idx], labels=labels[idx])
        if not np.isfinite(loss):
            raise TrainingDivergedError(
                f"non-finite loss at batch offset {start} (lr={learning_rate}, {direction})"
            )
        total += loss * len(idx)
        model = apply_step(model, grads, learning_rate, direction)
    return model, total / n


def train(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    config: TrainConfig,
    eval_sets: Optional[Mapping[str, tuple[np.ndarray, np.ndarray]]] = None,
    hook: Optional[Callable[[MlpModel, EpochMetrics], None]] = None,
) -> tuple[MlpModel, list[EpochMetrics]]:
    """Mini-batch SGD training loop, deterministic under config.seed.

    When validation_fraction > 0 a validation subset is carved off the
    training data before the first epoch. eval_sets may supply
    'test'/'forget'/'retain' (and 'val', which overrides the carve)
    feature/label pairs; missing sets report accuracy 0.0.
    """
    config.validate()
    x = np.asarray(features, dtype=float)
    y = np.asarray(labels)
    if x.shape[1] != model.input_dim:
        raise ShapeError(
            f"features dim {x.shape[1]} does not match model input {model.input_dim}"
        )
    eval_sets = dict(eval_sets or {})
    rng = np.random.default_rng(config.seed)

    if "val" not in eval_sets and config.validation_fraction > 0:
        n_val = int(config.validation_fraction * len(y))
        perm = rng.permutation(len(y))
        if n_val > 0:
            eval_sets["val"] = (x[perm[:n_val]], y[perm[:n_val]])
        x, y = x[perm[n_val:]], y[perm[n_val:]]

    metrics: list[EpochMetrics] = []
    for epoch in range(1, config.epochs + 1):
        model, mean_loss = sgd_epoch(
            model, x, y, config.learning_rate, config.batch_size, rng
        )
        m = EpochMetrics(epoch=epoch, mean_loss=mean_loss)
        m.train_acc = evaluate_accuracy(model, x, y)
        for name in ("val", "test", "forget", "retain"):
            if name in eval_sets:
                ex, ey = eval_sets[name]
                setattr(m, f"{name}_acc", evaluate_accuracy(model, ex, ey))
        metrics.append(m)
        if hook is not None:
            hook(model, m)
    return model, metrics
