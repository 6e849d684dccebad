"""Shadow-model membership-inference attack.

Trains a shadow ensemble mirroring the target configuration, builds a
balanced member/non-member attack dataset from the shadows' outputs,
trains a binary attack classifier, and evaluates per-epoch MIA balanced
accuracy against the (possibly unlearned) target model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data_pipeline import Dataset
from .exceptions import ConfigError, SizingError
from .nn_core import MlpModel, TrainConfig, forward, mlp_init, train

TOP_K = 10
# caps the per-sample loss feature so a destroyed model's exploding losses
# stay inside the regime the attack model was trained on
LOSS_CAP = 50.0
ATTACK_HIDDEN = 64


@dataclass
class AttackReport:
    mia_forget_acc: float
    mia_retain_acc: float
    adversary_success: float
    forget_member_count: int
    forget_nonmember_count: int
    retain_member_count: int
    retain_nonmember_count: int


@dataclass
class ShadowEnsemble:
    models: list[MlpModel]
    member_sets: list[np.ndarray]
    nonmember_sets: list[np.ndarray]

    def __len__(self) -> int:
        return len(self.models)


def extract_attack_features(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Per-sample attack features from model outputs only.

    Columns: top-k sorted posteriors (k=min(C,10), zero-padded to 10),
    capped cross-entropy loss, prediction-correctness flag, true class id.
    """
    probs = forward(model, features)
    y = np.asarray(labels)
    n, n_classes = probs.shape
    k = min(n_classes, TOP_K)
    top = -np.sort(-probs, axis=1)[:, :k]
    if k < TOP_K:
        top = np.hstack([top, np.zeros((n, TOP_K - k))])
    loss = np.minimum(-np.log(probs[np.arange(n), y] + 1e-12), LOSS_CAP)
    correct = (probs.argmax(axis=1) == y).astype(float)
    return np.hstack([top, loss[:, None], correct[:, None], y[:, None].astype(float)])


def train_shadows(
    shadow_pool: np.ndarray,
    dataset: Dataset,
    layer_dims: Sequence[int],
    train_config: TrainConfig,
    k: int = 5,
    seed: int = 0,
) -> ShadowEnsemble:
    """Train k shadow models on disjoint folds of the shadow pool.

    Shadow i's members are fold i; its non-members are an equal-size
    disjoint sample drawn from the other folds (for k=1, the other half
    of the pool). Each shadow uses the target's architecture and
    hyperparameters with a per-shadow derived seed.
    """
    if k < 1:
        raise ConfigError("need at least one shadow model")
    rng = np.random.default_rng(seed)
    pool = np.asarray(shadow_pool)[rng.permutation(len(shadow_pool))]

    if k == 1:
        half = len(pool) // 2
        if half == 0:
            raise SizingError(f"pool of {len(pool)} too small for one shadow")
        folds = [pool[:half]]
        others = [pool[half : 2 * half]]
    else:
        fold_size = len(pool) // k
        if fold_size == 0:
            raise SizingError(f"pool of {len(pool)} too small for {k} shadows")
        folds = [pool[i * fold_size : (i + 1) * fold_size] for i in range(k)]
        others = []
        for i in range(k):
            rest = np.concatenate([folds[j] for j in range(k) if j != i])
            others.append(rng.choice(rest, size=fold_size, replace=False))

    models = []
    for i, members in enumerate(folds):
        cfg = TrainConfig(
            epochs=train_config.epochs,
            learning_rate=train_config.learning_rate,
            batch_size=train_config.batch_size,
            seed=seed + 1 + i,
            validation_fraction=0.0,
        )
        model = mlp_init(layer_dims, seed=seed + 1 + i)
        model, _ = train(model, dataset.features[members], dataset.labels[members], cfg)
        models.append(model)
    return ShadowEnsemble(models=models, member_sets=folds, nonmember_sets=others)


def build_attack_dataset(ensemble: ShadowEnsemble, dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Labeled attack records: members -> 1, non-members -> 0, per shadow.

    Balance is exact (50/50) overall and per shadow since member and
    non-member sets are equal-sized by construction.
    """
    feats = []
    labels = []
    for model, members, nonmembers in zip(
        ensemble.models, ensemble.member_sets, ensemble.nonmember_sets
    ):
        feats.append(
            extract_attack_features(model, dataset.features[members], dataset.labels[members])
        )
        labels.append(np.ones(len(members), dtype=np.int64))
        feats.append(
            extract_attack_features(
                model, dataset.features[nonmembers], dataset.labels[nonmembers]
            )
        )
        labels.append(np.zeros(len(nonmembers), dtype=np.int64))
    return np.vstack(feats), np.concatenate(labels)


def train_attack_model(
    attack_features: np.ndarray, attack_labels: np.ndarray, config: TrainConfig
) -> MlpModel:
    """Binary membership classifier: one hidden layer of 64 units."""
    y = np.asarray(attack_labels)
    if len(np.unique(y)) < 2:
        raise ConfigError("attack dataset contains a single label")
    dims = [attack_features.shape[1], ATTACK_HIDDEN, 2]
    model = mlp_init(dims, seed=config.seed)
    model, _ = train(model, attack_features, y, config)
    return model


def evaluate_mia(
    attack: MlpModel,
    target: MlpModel,
    member_indices: np.ndarray,
    nonmember_indices: np.ndarray,
    dataset: Dataset,
    seed: int = 0,
) -> tuple[float, int]:
    """Balanced attack accuracy against the current target model.

    The larger index set is subsampled (seeded) to match the smaller so
    both sides contribute equally. Returns (balanced accuracy, per-side n).
    """
    members = np.asarray(member_indices)
    nonmembers = np.asarray(nonmember_indices)
    if len(members) == 0 or len(nonmembers) == 0:
        raise ConfigError("both member and non-member sets must be nonempty")
    rng = np.random.default_rng(seed)
    n = min(len(members), len(nonmembers))
    if len(members) > n:
        members = rng.choice(members, size=n, replace=False)
    if len(nonmembers) > n:
        nonmembers = rng.choice(nonmembers, size=n, replace=False)

    mf = extract_attack_features(target, dataset.features[members], dataset.labels[members])
    nf = extract_attack_features(
        target, dataset.features[nonmembers], dataset.labels[nonmembers]
    )
    pred_m = forward(attack, mf).argmax(axis=1)
    pred_n = forward(attack, nf).argmax(axis=1)
    balanced = 0.5 * (float((pred_m == 1).mean()) + float((pred_n == 0).mean()))
    return balanced, n


def adversary_success(
    attack: MlpModel,
    unlearned: MlpModel,
    forget_indices: np.ndarray,
    holdout_indices: np.ndarray,
    dataset: Dataset,
    seed: int = 0,
) -> float:
    """Balanced success rate of the attack against the unlearned model:
    mean of P(predict member | forget) and P(predict non-member | holdout).
    Random guessing lands at 0.5."""
    rate, _ = evaluate_mia(attack, unlearned, forget_indices, holdout_indices, dataset, seed)
    return rate


def attack_report(
    attack: MlpModel,
    target: MlpModel,
    forget_indices: np.ndarray,
    retain_indices: np.ndarray,
    holdout_indices: np.ndarray,
    dataset: Dataset,
    seed: int = 0,
) -> AttackReport:
    """Per-epoch MIA summary: forget-vs-holdout, retain-vs-holdout, and the
    adversary success rate (distinct subsample seeds per curve)."""
    forget_acc, n_f = evaluate_mia(attack, target, forget_indices, holdout_indices, dataset, seed)
    retain_acc, n_r = evaluate_mia(
        attack, target, retain_indices, holdout_indices, dataset, seed + 1
    )
    success = adversary_success(attack, target, forget_indices, holdout_indices, dataset, seed + 2)
    return AttackReport(
        mia_forget_acc=forget_acc,
        mia_retain_acc=retain_acc,
        adversary_success=success,
        forget_member_count=n_f,
        forget_nonmember_count=n_f,
        retain_member_count=n_r,
        retain_nonmember_count=n_r,
    )
