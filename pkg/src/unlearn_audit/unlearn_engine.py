"""The three unlearning algorithms: NegGrad, SCRUB, SFTC.

Each method is exposed as a per-epoch step plus run_unlearning, a driver
that runs epochs and invokes an evaluation hook after every epoch so the
audit can track the model throughout the unlearning process.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from .exceptions import ConfigError, ShapeError
from .nn_core import (
    EpochMetrics,
    GradientSet,
    MlpModel,
    apply_step,
    forward,
    loss_and_grad,
    sgd_epoch,
)


@dataclass
class NegGrad:
    """Gradient ascent on the forget set's cross-entropy."""

    learning_rate: float = 0.01

    name = "neggrad"

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")


@dataclass
class Scrub:
    """Teacher-student unlearning: push away from the teacher on the forget
    set, stay close (and accurate) on the retain set."""

    learning_rate: float = 0.01
    alpha: float = 0.5  # retain-KL weight
    gamma: float = 1.0  # forget-maximization weight

    name = "scrub"

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.alpha < 0 or self.gamma < 0:
            raise ConfigError("alpha and gamma must be >= 0")


@dataclass
class Sftc:
    """Fine-tune on retain while training forget samples toward deliberately
    wrong (confusion) labels."""

    learning_rate: float = 0.01
    confusion_resample: str = "per_epoch"  # or "once"

    name = "sftc"

    def validate(self) -> None:
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be > 0")
        if self.confusion_resample not in ("per_epoch", "once"):
            raise ConfigError(
                f"confusion_resample must be per_epoch or once, got {self.confusion_resample!r}"
            )


UnlearnMethod = Union[NegGrad, Scrub, Sftc]


@dataclass
class UnlearnTrace:
    method: str
    epochs_run: int
    entries: list  # (EpochMetrics, AttackReport) pairs from the hook


def fine_tune_epoch(
    model: MlpModel,
    features: np.ndarray,
    labels: np.ndarray,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> MlpModel:
    """One plain shuffled fine-tuning pass (the degenerate baseline for
    SCRUB with alpha=gamma=0 and SFTC with an empty forget set)."""
    model, _ = sgd_epoch(model, features, labels, lr, batch_size, rng)
    return model


def neggrad_epoch(
    model: MlpModel,
    forget_x: np.ndarray,
    forget_y: np.ndarray,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> MlpModel:
    """One full ascent pass over forget mini-batches. Never touches retain data."""
    if len(forget_y) == 0:
        raise ConfigError("forget set is empty")
    model, _ = sgd_epoch(model, forget_x, forget_y, lr, batch_size, rng, direction="ascend")
    return model


def _add_scaled(base: GradientSet, extra: GradientSet, scale: float) -> GradientSet:
    return GradientSet(
        [g + scale * e for g, e in zip(base.weight_grads, extra.weight_grads)],
        [g + scale * e for g, e in zip(base.bias_grads, extra.bias_grads)],
    )


def _scale(grads: GradientSet, scale: float) -> GradientSet:
    return GradientSet(
        [scale * g for g in grads.weight_grads],
        [scale * g for g in grads.bias_grads],
    )


def scrub_epoch(
    student: MlpModel,
    teacher: MlpModel,
    retain_x: np.ndarray,
    retain_y: np.ndarray,
    forget_x: np.ndarray,
    forget_y: np.ndarray,
    method: Scrub,
    batch_size: int,
    rng: np.random.Generator,
) -> MlpModel:
    """Max-phase then min-phase.

    Max: ascend on mean KL(teacher||student) over forget batches (weight
    gamma; skipped entirely when gamma is 0). Min: descend on
    CE(true) + alpha * KL(teacher||student) over retain batches. The KL
    gradient wrt the student equals the soft-target cross-entropy gradient
    with the teacher's posteriors as targets. The teacher is never modified.
    """
    method.validate()
    if student.layer_dims != teacher.layer_dims:
        raise ShapeError("student and teacher are not shape-congruent")
    if len(retain_y) == 0 or len(forget_y) == 0:
        raise ConfigError("retain and forget sets must be nonempty")
    lr = method.learning_rate

    if method.gamma > 0:
        perm = rng.permutation(len(forget_y))
        for start in range(0, len(perm), batch_size):
            idx = perm[start : start + batch_size]
            targets = forward(teacher, forget_x[idx])
            _, grads = loss_and_grad(student, forget_x[idx], soft_targets=targets)
            student = apply_step(student, _scale(grads, method.gamma), lr, "ascend")

    perm = rng.permutation(len(retain_y))
    for start in range(0, len(perm), batch_size):
        idx = perm[start : start + batch_size]
        _, grads = loss_and_grad(student, retain_x[idx], labels=retain_y[idx])
        if method.alpha > 0:
            targets = forward(teacher, retain_x[idx])
            _, kl_grads = loss_and_grad(student, retain_x[idx], soft_targets=targets)
            grads = _add_scaled(grads, kl_grads, method.alpha)
        student = apply_step(student, grads, lr, "descend")
    return student


def draw_confusion_labels(
    true_labels: np.ndarray, num_classes: int, rng: np.random.Generator
) -> np.ndarray:
    """Uniform draw over the num_classes - 1 incorrect classes per sample."""
    if num_classes < 2:
        raise ConfigError("confusion labels need at least 2 classes")
    y = np.asarray(true_labels)
    offsets = rng.integers(1, num_classes, size=len(y))
    return (y + offsets) % num_classes


def sftc_epoch(
    model: MlpModel,
    retain_x: np.ndarray,
    retain_y: np.ndarray,
    forget_x: np.ndarray,
    confusion_y: np.ndarray,
    lr: float,
    batch_size: int,
    rng: np.random.Generator,
) -> MlpModel:
    """One interleaved descent pass over retain (true labels) and forget
    (confusion labels) samples, shuffled together."""
    if len(retain_y) == 0:
        raise ConfigError("retain set is empty")
    if len(forget_x) != len(confusion_y):
        raise ShapeError("forget features and confusion labels differ in length")
    if len(confusion_y):
        x = np.concatenate([retain_x, forget_x])
        y = np.concatenate([retain_y, confusion_y])
    else:
        x, y = retain_x, retain_y
    return fine_tune_epoch(model, x, y, lr, batch_size, rng)


def run_unlearning(
    model: MlpModel,
    retain_x: np.ndarray,
    retain_y: np.ndarray,
    forget_x: np.ndarray,
    forget_y: np.ndarray,
    num_classes: int,
    method: UnlearnMethod,
    epochs: int,
    batch_size: int,
    seed: int,
    hook: Optional[Callable[[MlpModel, int], tuple]] = None,
) -> tuple[MlpModel, UnlearnTrace]:
    """Run `epochs` unlearning epochs, calling hook(model, epoch) after each.

    Snapshots the teacher (for SCRUB) before epoch 1. Deterministic under
    seed; hook return values are appended to the trace.
    """
    method.validate()
    if epochs < 0:
        raise ConfigError("epochs must be >= 0")
    rng = np.random.default_rng(seed)
    teacher = model.copy() if isinstance(method, Scrub) else None
    fixed_confusion = None
    if isinstance(method, Sftc) and method.confusion_resample == "once" and len(forget_y):
        fixed_confusion = draw_confusion_labels(forget_y, num_classes, rng)

    entries = []
    for epoch in range(1, epochs + 1):
        if isinstance(method, NegGrad):
            model = neggrad_epoch(
                model, forget_x, forget_y, method.learning_rate, batch_size, rng
            )
        elif isinstance(method, Scrub):
            model = scrub_epoch(
                model, teacher, retain_x, retain_y, forget_x, forget_y,
                method, batch_size, rng,
            )
        else:
            if fixed_confusion is not None:
                confusion = fixed_confusion
            elif len(forget_y):
                confusion = draw_confusion_labels(forget_y, num_classes, rng)
            else:
                confusion = forget_y
            model = sftc_epoch(
                model, retain_x, retain_y, forget_x, confusion,
                method.learning_rate, batch_size, rng,
            )
        if hook is not None:
            entries.append(hook(model, epoch))
    return model, UnlearnTrace(method=method.name, epochs_run=epochs, entries=entries)
