"""Config-driven experiment orchestration.

End-to-end runs (train target + shadows -> attack -> unlearn with per-epoch
MIA), learning-rate sensitivity sweeps, and metric persistence as CSV, JSON
and self-emitted SVG charts.
"""

from __future__ import annotations

import dataclasses
import json
import os
import tempfile
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import mia_engine, nn_core, unlearn_engine
from .data_pipeline import Dataset, SplitPlan, SyntheticSpec, generate_synthetic, load_tabular, make_splits
from .exceptions import ConfigError, PhaseError, UnlearnAuditError
from .nn_core import EpochMetrics, MlpModel, TrainConfig, evaluate_accuracy, forward
from .unlearn_engine import NegGrad, Scrub, Sftc, UnlearnMethod

CSV_COLUMNS = [
    "epoch",
    "train_acc",
    "val_acc",
    "test_acc",
    "forget_acc",
    "retain_acc",
    "mia_forget_acc",
    "mia_retain_acc",
    "adversary_success",
]

# fixed child-seed offsets from the master seed, so each phase is
# independently reproducible
SEED_SPLIT = 1
SEED_TARGET = 2
SEED_SHADOWS = 3
SEED_ATTACK = 10
SEED_UNLEARN = 11
SEED_EVAL = 12


@dataclass
class ExperimentConfig:
    dataset_path: Optional[str] = None
    dataset_format: str = "csv_labeled"
    synthetic: Optional[SyntheticSpec] = None
    plan: SplitPlan = field(default_factory=SplitPlan)
    hidden_dims: list[int] = field(default_factory=lambda: [128])
    target: TrainConfig = field(
        default_factory=lambda: TrainConfig(epochs=30, learning_rate=0.01, batch_size=64)
    )
    shadow_count: int = 5
    attack: TrainConfig = field(
        default_factory=lambda: TrainConfig(
            epochs=50, learning_rate=0.01, batch_size=32, validation_fraction=0.0
        )
    )
    method: UnlearnMethod = field(default_factory=NegGrad)
    unlearn_epochs: int = 10
    unlearn_batch_size: int = 64
    out_dir: Optional[str] = None
    formats: tuple = ("csv", "json")
    seed: int = 0

    def validate(self) -> None:
        if (self.dataset_path is None) == (self.synthetic is None):
            raise ConfigError("configure exactly one of dataset.path or synthetic.*")
        if self.shadow_count < 1:
            raise ConfigError("shadows.k must be >= 1")
        if self.unlearn_epochs < 0:
            raise ConfigError("unlearn.epochs must be >= 0")
        self.target.validate()
        self.attack.validate()
        self.method.validate()


@dataclass
class ExperimentReport:
    baseline: dict
    trace_rows: list
    timings: dict
    config_echo: dict
    seed: int


@dataclass
class SweepReport:
    entries: list  # dicts: learning_rate + (report | error)


def _method_echo(method: UnlearnMethod) -> dict:
    echo = {"name": method.name, "learning_rate": method.learning_rate}
    if isinstance(method, Scrub):
        echo.update(alpha=method.alpha, gamma=method.gamma)
    if isinstance(method, Sftc):
        echo["confusion_resample"] = method.confusion_resample
    return echo


def config_echo(config: ExperimentConfig) -> dict:
    echo = {
        "dataset_path": config.dataset_path,
        "dataset_format": config.dataset_format,
        "synthetic": dataclasses.asdict(config.synthetic) if config.synthetic else None,
        "plan": dataclasses.asdict(config.plan),
        "hidden_dims": list(config.hidden_dims),
        "target": dataclasses.asdict(config.target),
        "shadow_count": config.shadow_count,
        "attack": dataclasses.asdict(config.attack),
        "method": _method_echo(config.method),
        "unlearn_epochs": config.unlearn_epochs,
        "unlearn_batch_size": config.unlearn_batch_size,
        "seed": config.seed,
    }
    return echo


def _mean_loss(model: MlpModel, features: np.ndarray, labels: np.ndarray) -> float:
    probs = forward(model, features)
    return float(-np.log(probs[np.arange(len(labels)), labels] + 1e-12).mean())


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run the full pipeline and (when out_dir is set) persist the report.

    All child seeds derive from the master seed by fixed offsets. Any phase
    failure aborts with the phase name and cause.
    """
    config.validate()
    master = config.seed
    timings: dict[str, float] = {}

    def phase(name, fn):
        t0 = time.perf_counter()
        try:
            out = fn()
        except Exception as exc:
            raise PhaseError(name, exc) from exc
        timings[name] = time.perf_counter() - t0
        return out

    def load_data() -> Dataset:
        if config.synthetic is not None:
            return generate_synthetic(config.synthetic)
        return load_tabular(config.dataset_path, config.dataset_format)

    dataset = phase("load_data", load_data)

    def split():
        plan = dataclasses.replace(config.plan, seed=master + SEED_SPLIT)
        return make_splits(dataset, plan)

    splits = phase("make_splits", split)
    x, y = dataset.features, dataset.labels
    layer_dims = [dataset.n_features, *config.hidden_dims, dataset.num_classes]

    # val reporting uses a fixed half of the test split: carving val out of
    # target_train would leave forget rows untrained and corrupt membership
    val_rng = np.random.default_rng(master + SEED_TARGET)
    val_idx = splits.test[val_rng.permutation(len(splits.test))[: max(1, len(splits.test) // 2)]]
    eval_sets = {
        "val": (x[val_idx], y[val_idx]),
        "test": (x[splits.test], y[splits.test]),
        "forget": (x[splits.forget], y[splits.forget]),
        "retain": (x[splits.retain], y[splits.retain]),
    }

    def train_target():
        cfg = dataclasses.replace(
            config.target, seed=master + SEED_TARGET, validation_fraction=0.0
        )
        model = nn_core.mlp_init(layer_dims, seed=master + SEED_TARGET)
        return nn_core.train(
            model, x[splits.target_train], y[splits.target_train], cfg, eval_sets
        )

    target, target_metrics = phase("train_target", train_target)

    shadows = phase(
        "train_shadows",
        lambda: mia_engine.train_shadows(
            splits.shadow_pool, dataset, layer_dims, config.target,
            k=config.shadow_count, seed=master + SEED_SHADOWS,
        ),
    )
    attack_x, attack_y = phase(
        "build_attack_dataset", lambda: mia_engine.build_attack_dataset(shadows, dataset)
    )

    def train_attack():
        cfg = dataclasses.replace(config.attack, seed=master + SEED_ATTACK)
        return mia_engine.train_attack_model(attack_x, attack_y, cfg)

    attack = phase("train_attack_model", train_attack)

    def eval_seed(epoch: int) -> int:
        return master + SEED_EVAL + 4 * epoch

    def baseline_report():
        rep = mia_engine.attack_report(
            attack, target, splits.forget, splits.retain, splits.test, dataset,
            seed=eval_seed(0),
        )
        last = target_metrics[-1]
        return {
            "train_acc": last.train_acc,
            "val_acc": last.val_acc,
            "test_acc": last.test_acc,
            "forget_acc": last.forget_acc,
            "retain_acc": last.retain_acc,
            "mean_loss": last.mean_loss,
            "mia_forget_acc": rep.mia_forget_acc,
            "mia_retain_acc": rep.mia_retain_acc,
            "adversary_success": rep.adversary_success,
        }

    baseline = phase("baseline_attack", baseline_report)

    def unlearn():
        def hook(model: MlpModel, epoch: int):
            m = EpochMetrics(
                epoch=epoch,
                train_acc=evaluate_accuracy(model, x[splits.target_train], y[splits.target_train]),
                mean_loss=_mean_loss(model, x[splits.target_train], y[splits.target_train]),
            )
            for name in ("val", "test", "forget", "retain"):
                ex, ey = eval_sets[name]
                setattr(m, f"{name}_acc", evaluate_accuracy(model, ex, ey))
            rep = mia_engine.attack_report(
                attack, model, splits.forget, splits.retain, splits.test, dataset,
                seed=eval_seed(epoch),
            )
            return m, rep

        return unlearn_engine.run_unlearning(
            target,
            x[splits.retain], y[splits.retain],
            x[splits.forget], y[splits.forget],
            dataset.num_classes,
            config.method,
            config.unlearn_epochs,
            config.unlearn_batch_size,
            seed=master + SEED_UNLEARN,
            hook=hook,
        )

    _, trace = phase("run_unlearning", unlearn)

    trace_rows = []
    for metrics, rep in trace.entries:
        trace_rows.append(
            {
                "epoch": metrics.epoch,
                "train_acc": metrics.train_acc,
                "val_acc": metrics.val_acc,
                "test_acc": metrics.test_acc,
                "forget_acc": metrics.forget_acc,
                "retain_acc": metrics.retain_acc,
                "mia_forget_acc": rep.mia_forget_acc,
                "mia_retain_acc": rep.mia_retain_acc,
                "adversary_success": rep.adversary_success,
            }
        )

    report = ExperimentReport(
        baseline=baseline,
        trace_rows=trace_rows,
        timings=dict(timings),
        config_echo=config_echo(config),
        seed=master,
    )
    if config.out_dir is not None:
        phase("write_report", lambda: write_report(report, config.out_dir, config.formats))
    return report


def sensitivity_sweep(
    base_config: ExperimentConfig, learning_rates: Sequence[float]
) -> SweepReport:
    """run_experiment per rate with the unlearning learning rate overridden.

    Per-rate seeds are identical so the rate is the only varying factor;
    a failed rate is recorded without aborting the sweep.
    """
    rates = list(learning_rates)
    if not rates:
        raise ConfigError("learning rate list is empty")
    if any(r <= 0 for r in rates):
        raise ConfigError("learning rates must be positive")
    if any(b <= a for a, b in zip(rates, rates[1:])):
        raise ConfigError("learning rates must be strictly increasing")

    entries = []
    for rate in rates:
        cfg = dataclasses.replace(
            base_config, method=dataclasses.replace(base_config.method, learning_rate=rate)
        )
        if base_config.out_dir is not None:
            cfg = dataclasses.replace(cfg, out_dir=str(Path(base_config.out_dir) / f"lr_{rate:g}"))
        try:
            report = run_experiment(cfg)
            entries.append({"learning_rate": rate, "report": report, "error": None})
        except UnlearnAuditError as exc:
            entries.append({"learning_rate": rate, "report": None, "error": str(exc)})
    return SweepReport(entries=entries)


def _atomic_write(path: Path, data: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def render_csv(trace_rows: list) -> str:
    lines = [",".join(CSV_COLUMNS)]
    for row in trace_rows:
        cells = [str(int(row["epoch"]))]
        cells += [f"{float(row[c]):.9g}" for c in CSV_COLUMNS[1:]]
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def report_to_dict(report: ExperimentReport) -> dict:
    return {
        "baseline": report.baseline,
        "trace": report.trace_rows,
        "timings": report.timings,
        "config": report.config_echo,
        "seed": report.seed,
    }


def report_from_dict(data: dict) -> ExperimentReport:
    return ExperimentReport(
        baseline=data["baseline"],
        trace_rows=data["trace"],
        timings=data.get("timings", {}),
        config_echo=data.get("config", {}),
        seed=data.get("seed", 0),
    )


def _svg_panel(rows, keys, colors, title, x0, width, height) -> list[str]:
    pad_l, pad_b, pad_t = 45, 30, 25
    plot_w, plot_h = width - pad_l - 15, height - pad_t - pad_b
    n = len(rows)
    epochs = [r["epoch"] for r in rows]
    e_min, e_max = min(epochs), max(epochs)
    span = max(e_max - e_min, 1)

    def sx(e):
        return x0 + pad_l + plot_w * (e - e_min) / span

    def sy(v):
        return pad_t + plot_h * (1.0 - min(max(v, 0.0), 1.0))

    parts = [
        f'<rect x="{x0 + pad_l}" y="{pad_t}" width="{plot_w}" height="{plot_h}" '
        f'fill="none" stroke="#888"/>',
        f'<text x="{x0 + pad_l + plot_w / 2:.1f}" y="15" text-anchor="middle" '
        f'font-size="13">{title}</text>',
    ]
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        yy = sy(frac)
        parts.append(
            f'<line x1="{x0 + pad_l}" y1="{yy:.1f}" x2="{x0 + pad_l + plot_w}" '
            f'y2="{yy:.1f}" stroke="#ddd"/>'
        )
        parts.append(
            f'<text x="{x0 + pad_l - 5}" y="{yy + 4:.1f}" text-anchor="end" '
            f'font-size="10">{frac:g}</text>'
        )
    parts.append(
        f'<text x="{x0 + pad_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle" '
        f'font-size="11">epoch</text>'
    )
    for i, (key, color) in enumerate(zip(keys, colors)):
        pts = " ".join(f"{sx(r['epoch']):.1f},{sy(float(r[key])):.1f}" for r in rows)
        if n == 1:
            e, v = epochs[0], float(rows[0][key])
            parts.append(f'<circle cx="{sx(e):.1f}" cy="{sy(v):.1f}" r="3" fill="{color}"/>')
        else:
            parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        lx = x0 + pad_l + 6 + 95 * (i % 3)
        ly = pad_t + 12 + 13 * (i // 3)
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 14}" y2="{ly - 4}" stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 18}" y="{ly}" font-size="10">{key}</text>')
    return parts


def render_svg(trace_rows: list) -> str:
    """Two-panel polyline chart: model accuracies and MIA accuracies."""
    width, height = 980, 320
    half = width // 2
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    if trace_rows:
        parts += _svg_panel(
            trace_rows,
            ["train_acc", "val_acc", "test_acc", "forget_acc", "retain_acc"],
            ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd"],
            "Model accuracy", 0, half, height,
        )
        parts += _svg_panel(
            trace_rows,
            ["mia_forget_acc", "mia_retain_acc", "adversary_success"],
            ["#d62728", "#1f77b4", "#7f7f7f"],
            "MIA accuracy", half, half, height,
        )
    else:
        parts.append(
            f'<text x="{width / 2}" y="{height / 2}" text-anchor="middle">empty trace</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_report(report: ExperimentReport, out_dir, formats=("csv", "json")) -> list[Path]:
    """Persist the report; writes are atomic (temp file + rename)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    unknown = set(formats) - {"csv", "json", "svg"}
    if unknown:
        raise ConfigError(f"unknown report formats: {sorted(unknown)}")
    written = []
    if "csv" in formats:
        path = out / "metrics.csv"
        _atomic_write(path, render_csv(report.trace_rows))
        written.append(path)
    if "json" in formats:
        path = out / "report.json"
        _atomic_write(path, json.dumps(report_to_dict(report), indent=2) + "\n")
        written.append(path)
    if "svg" in formats:
        path = out / "curves.svg"
        _atomic_write(path, render_svg(report.trace_rows))
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# flat key=value config files

_METHODS = {"neggrad": NegGrad, "scrub": Scrub, "sftc": Sftc}

CONFIG_KEYS = {
    "dataset.path": str,
    "dataset.format": str,
    "synthetic.n": int,
    "synthetic.d": int,
    "synthetic.classes": int,
    "synthetic.separation": float,
    "synthetic.seed": int,
    "split.train_fraction": float,
    "split.target_shadow_fraction": float,
    "split.retain_fraction": float,
    "split.forget_mode": str,
    "split.forget_class": int,
    "target.epochs": int,
    "target.lr": float,
    "target.batch_size": int,
    "target.hidden": str,
    "shadows.k": int,
    "attack.epochs": int,
    "attack.lr": float,
    "attack.batch_size": int,
    "unlearn.method": str,
    "unlearn.epochs": int,
    "unlearn.lr": float,
    "unlearn.batch_size": int,
    "scrub.alpha": float,
    "scrub.gamma": float,
    "sftc.resample": str,
    "out_dir": str,
    "seed": int,
    "formats": str,
}


def parse_config_entries(lines, source: str = "<config>") -> dict:
    """Parse flat key=value lines into a typed entry dict; unknown keys error."""
    entries = {}
    for lineno, raw in enumerate(lines, start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        try:
            entries[key] = CONFIG_KEYS[key](value)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key}: {exc}") from exc
    return entries


def load_config_file(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return parse_config_entries(path.read_text(encoding="utf-8").splitlines(), str(path))


def build_experiment_config(entries: dict) -> ExperimentConfig:
    """Assemble an ExperimentConfig from typed key=value entries."""
    e = dict(entries)
    seed = e.get("seed", 0)

    synthetic = None
    if any(k.startswith("synthetic.") for k in e):
        synthetic = SyntheticSpec(
            n_samples=e.get("synthetic.n", 1000),
            n_features=e.get("synthetic.d", 20),
            n_classes=e.get("synthetic.classes", 5),
            class_separation=e.get("synthetic.separation", 3.0),
            seed=e.get("synthetic.seed", seed),
        )

    plan = SplitPlan(
        train_fraction=e.get("split.train_fraction", 0.8),
        target_shadow_fraction=e.get("split.target_shadow_fraction", 0.5),
        retain_fraction=e.get("split.retain_fraction", 0.8),
        forget_mode=e.get("split.forget_mode", "random_rows"),
        forget_class=e.get("split.forget_class"),
    )
    target = TrainConfig(
        epochs=e.get("target.epochs", 30),
        learning_rate=e.get("target.lr", 0.01),
        batch_size=e.get("target.batch_size", 64),
        validation_fraction=0.0,
    )
    attack = TrainConfig(
        epochs=e.get("attack.epochs", 50),
        learning_rate=e.get("attack.lr", 0.01),
        batch_size=e.get("attack.batch_size", 32),
        validation_fraction=0.0,
    )
    try:
        hidden = [int(tok) for tok in str(e.get("target.hidden", "128")).split(",") if tok.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad target.hidden: {exc}") from exc

    method_name = e.get("unlearn.method", "neggrad")
    if method_name not in _METHODS:
        raise ConfigError(f"unknown unlearn.method {method_name!r}")
    unlearn_lr = e.get("unlearn.lr", target.learning_rate)
    if method_name == "scrub":
        method = Scrub(
            learning_rate=unlearn_lr,
            alpha=e.get("scrub.alpha", 0.5),
            gamma=e.get("scrub.gamma", 1.0),
        )
    elif method_name == "sftc":
        method = Sftc(
            learning_rate=unlearn_lr,
            confusion_resample=e.get("sftc.resample", "per_epoch"),
        )
    else:
        method = NegGrad(learning_rate=unlearn_lr)

    formats = tuple(
        tok.strip() for tok in str(e.get("formats", "csv,json")).split(",") if tok.strip()
    )
    return ExperimentConfig(
        dataset_path=e.get("dataset.path"),
        dataset_format=e.get("dataset.format", "csv_labeled"),
        synthetic=synthetic,
        plan=plan,
        hidden_dims=hidden,
        target=target,
        shadow_count=e.get("shadows.k", 5),
        attack=attack,
        method=method,
        unlearn_epochs=e.get("unlearn.epochs", 10),
        unlearn_batch_size=e.get("unlearn.batch_size", 64),
        out_dir=e.get("out_dir"),
        formats=formats,
        seed=seed,
    )
