import numpy as np
import pytest

from unlearn_audit import data_pipeline as dp
from unlearn_audit import mia_engine as me
from unlearn_audit import nn_core as nc


def make_purchase_style(n=2000, d=200, n_classes=10, sharpness=0.35, seed=21):
    """Binary-feature dataset in the style of customer-purchase records:
    each class has a Bernoulli prototype, rows sample from it."""
    rng = np.random.default_rng(seed)
    protos = 0.5 + sharpness * (rng.random((n_classes, d)) - 0.5) * 2
    labels = np.arange(n) % n_classes
    features = (rng.random((n, d)) < protos[labels]).astype(float)
    return dp.Dataset(features, labels, n_classes, name="purchase_style")


@pytest.fixture(scope="session")
def overfit_fixture():
    """A grossly overfit target: linear softmax model memorizing barely
    separated high-dimensional blobs (train acc 1.0, test acc well under
    0.6), plus its shadow ensemble and trained attack model."""
    dataset = dp.generate_synthetic(dp.SyntheticSpec(2000, 300, 10, 0.5, seed=11))
    splits = dp.make_splits(dataset, dp.SplitPlan(seed=12))
    x, y = dataset.features, dataset.labels
    dims = [300, 10]
    train_cfg = nc.TrainConfig(
        epochs=60, learning_rate=0.1, batch_size=32, seed=7, validation_fraction=0.0
    )
    target = nc.mlp_init(dims, seed=7)
    target, metrics = nc.train(
        target, x[splits.target_train], y[splits.target_train], train_cfg,
        eval_sets={"test": (x[splits.test], y[splits.test])},
    )
    shadows = me.train_shadows(splits.shadow_pool, dataset, dims, train_cfg, k=5, seed=100)
    attack_x, attack_y = me.build_attack_dataset(shadows, dataset)
    attack_cfg = nc.TrainConfig(
        epochs=50, learning_rate=0.01, batch_size=32, seed=5, validation_fraction=0.0
    )
    attack = me.train_attack_model(attack_x, attack_y, attack_cfg)
    return {
        "dataset": dataset,
        "splits": splits,
        "dims": dims,
        "train_cfg": train_cfg,
        "target": target,
        "train_acc": metrics[-1].train_acc,
        "test_acc": metrics[-1].test_acc,
        "shadows": shadows,
        "attack_x": attack_x,
        "attack_y": attack_y,
        "attack": attack,
    }


def loss_threshold_oracle(attack_x, attack_y):
    """Best balanced-accuracy loss threshold fitted on shadow attack data.

    Returns (threshold, balanced accuracy on the fitting data). Column 10
    of the attack features is the per-sample loss; members have low loss.
    """
    losses = attack_x[:, 10]
    is_member = attack_y == 1
    best_t, best_acc = 0.0, 0.0
    for t in np.unique(losses):
        pred = losses < t
        bal = 0.5 * (pred[is_member].mean() + (~pred[~is_member]).mean())
        if bal > best_acc:
            best_acc, best_t = bal, t
    return best_t, best_acc
