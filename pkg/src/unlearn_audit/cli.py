"""Command-line front end over the harness.

Subcommands cover each pipeline phase and the full run. Exit status:
0 success, 1 usage/config error, 2 runtime (phase) error.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

from . import harness, mia_engine, nn_core
from .data_pipeline import generate_synthetic, make_splits, save_tabular
from .exceptions import ConfigError, PhaseError, UnlearnAuditError
from .harness import build_experiment_config, load_config_file, run_experiment, sensitivity_sweep

SUBCOMMANDS = ("gen-data", "split", "train", "attack", "unlearn", "run", "sweep", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we want exit 1
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="unlearn-audit", add_help=True)
    sub = parser.add_subparsers(dest="subcommand")
    common = dict(required=False)

    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        if name == "report":
            p.add_argument("--in", dest="in_path", required=True, help="report.json to re-emit")
            p.add_argument("--out", help="output directory")
            p.add_argument("--formats", default="csv,svg", help="comma list of csv,json,svg")
            continue
        p.add_argument("--config", help="flat key=value config file", **common)
        p.add_argument("--seed", help="master seed override")
        p.add_argument("--out", help="output directory (or file for gen-data)")
        p.add_argument("--method", help="unlearn.method override: neggrad|scrub|sftc")
        p.add_argument("--epochs", help="unlearn.epochs override")
        p.add_argument("--lr", help="unlearn.lr override")
        if name == "sweep":
            p.add_argument("--rates", help="comma-separated unlearning learning rates")
    return parser


def _typed(flag: str, raw: str, conv):
    try:
        return conv(raw)
    except ValueError:
        raise UsageError(f"invalid value for {flag}: {raw!r}")


def _merged_entries(args) -> dict:
    """Config file entries with flag overrides applied (flags win)."""
    entries = load_config_file(args.config) if args.config else {}
    if args.seed is not None:
        entries["seed"] = _typed("--seed", args.seed, int)
    if args.out is not None:
        entries["out_dir"] = args.out
    if args.method is not None:
        if args.method not in ("neggrad", "scrub", "sftc"):
            raise UsageError(f"invalid value for --method: {args.method!r}")
        entries["unlearn.method"] = args.method
    if args.epochs is not None:
        entries["unlearn.epochs"] = _typed("--epochs", args.epochs, int)
    if args.lr is not None:
        entries["unlearn.lr"] = _typed("--lr", args.lr, float)
    if "out_dir" not in entries and os.environ.get("UNLEARN_AUDIT_OUT"):
        entries["out_dir"] = os.environ["UNLEARN_AUDIT_OUT"]
    return entries


def _cmd_gen_data(config) -> int:
    if config.synthetic is None:
        raise ConfigError("gen-data needs synthetic.* keys")
    if config.out_dir is None:
        raise ConfigError("gen-data needs --out (target file path)")
    dataset = generate_synthetic(config.synthetic)
    out = Path(config.out_dir)
    if out.parent != Path("."):
        out.parent.mkdir(parents=True, exist_ok=True)
    save_tabular(dataset, out, config.dataset_format)
    print(f"wrote {dataset.n_samples}x{dataset.n_features} dataset "
          f"({dataset.num_classes} classes) to {out}")
    return 0


def _load_dataset(config):
    if config.synthetic is not None:
        return generate_synthetic(config.synthetic)
    from .data_pipeline import load_tabular

    return load_tabular(config.dataset_path, config.dataset_format)


def _cmd_split(config) -> int:
    dataset = _load_dataset(config)
    plan = dataclasses.replace(config.plan, seed=config.seed + harness.SEED_SPLIT)
    splits = make_splits(dataset, plan)
    summary = {
        name: len(getattr(splits, name))
        for name in ("target_train", "shadow_pool", "test", "retain", "forget")
    }
    print(json.dumps(summary, indent=2))
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = {
            name: getattr(splits, name).tolist()
            for name in ("target_train", "shadow_pool", "test", "retain", "forget")
        }
        (out / "splits.json").write_text(json.dumps(payload) + "\n", encoding="utf-8")
        print(f"wrote {out / 'splits.json'}")
    return 0


def _cmd_train(config) -> int:
    dataset = _load_dataset(config)
    plan = dataclasses.replace(config.plan, seed=config.seed + harness.SEED_SPLIT)
    splits = make_splits(dataset, plan)
    dims = [dataset.n_features, *config.hidden_dims, dataset.num_classes]
    cfg = dataclasses.replace(config.target, seed=config.seed + harness.SEED_TARGET)
    model = nn_core.mlp_init(dims, seed=config.seed + harness.SEED_TARGET)
    x, y = dataset.features, dataset.labels
    model, metrics = nn_core.train(
        model, x[splits.target_train], y[splits.target_train], cfg,
        eval_sets={"test": (x[splits.test], y[splits.test])},
    )
    last = metrics[-1]
    print(f"target trained: train_acc={last.train_acc:.4f} test_acc={last.test_acc:.4f} "
          f"loss={last.mean_loss:.4f}")
    return 0


def _cmd_run(config, entries, csv_only: bool = False) -> int:
    if csv_only:
        config = dataclasses.replace(config, formats=("csv",))
    report = run_experiment(config)
    base = report.baseline
    print(f"baseline: test_acc={base['test_acc']:.4f} "
          f"mia_forget={base['mia_forget_acc']:.4f} mia_retain={base['mia_retain_acc']:.4f}")
    if report.trace_rows:
        last = report.trace_rows[-1]
        print(f"epoch {last['epoch']}: forget_acc={last['forget_acc']:.4f} "
              f"test_acc={last['test_acc']:.4f} mia_forget={last['mia_forget_acc']:.4f} "
              f"success={last['adversary_success']:.4f}")
    if config.out_dir:
        print(f"outputs in {config.out_dir}")
    return 0


def _cmd_attack(config) -> int:
    config = dataclasses.replace(config, unlearn_epochs=0, out_dir=None)
    report = run_experiment(config)
    print(json.dumps(report.baseline, indent=2))
    return 0


def _cmd_sweep(config, args) -> int:
    if not args.rates:
        raise UsageError("sweep requires --rates")
    try:
        rates = [float(tok) for tok in args.rates.split(",") if tok.strip()]
    except ValueError:
        raise UsageError(f"invalid value for --rates: {args.rates!r}")
    sweep = sensitivity_sweep(config, rates)
    for entry in sweep.entries:
        rate = entry["learning_rate"]
        if entry["error"] is not None:
            print(f"lr={rate:g}: FAILED ({entry['error']})")
        elif entry["report"].trace_rows:
            last = entry["report"].trace_rows[-1]
            print(f"lr={rate:g}: terminal mia_forget={last['mia_forget_acc']:.4f} "
                  f"forget_acc={last['forget_acc']:.4f}")
        else:
            print(f"lr={rate:g}: empty trace")
    if config.out_dir:
        out = Path(config.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        payload = [
            {
                "learning_rate": e["learning_rate"],
                "error": e["error"],
                "report": harness.report_to_dict(e["report"]) if e["report"] else None,
            }
            for e in sweep.entries
        ]
        (out / "sweep.json").write_text(json.dumps(payload, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {out / 'sweep.json'}")
    return 0


def _cmd_report(args) -> int:
    path = Path(args.in_path)
    if not path.exists():
        raise ConfigError(f"report file not found: {path}")
    data = json.loads(path.read_text(encoding="utf-8"))
    report = harness.report_from_dict(data)
    out = args.out or os.environ.get("UNLEARN_AUDIT_OUT") or str(path.parent)
    formats = tuple(tok.strip() for tok in args.formats.split(",") if tok.strip())
    written = harness.write_report(report, out, formats)
    for p in written:
        print(f"wrote {p}")
    return 0


def dispatch(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.subcommand is None:
            raise UsageError("missing subcommand; expected one of " + ", ".join(SUBCOMMANDS))
        if args.subcommand == "report":
            return _cmd_report(args)
        entries = _merged_entries(args)
        config = build_experiment_config(entries)
        if args.subcommand == "gen-data":
            return _cmd_gen_data(config)
        if args.subcommand == "split":
            return _cmd_split(config)
        if args.subcommand == "train":
            return _cmd_train(config)
        if args.subcommand == "attack":
            return _cmd_attack(config)
        if args.subcommand == "unlearn":
            return _cmd_run(config, entries, csv_only=True)
        if args.subcommand == "run":
            return _cmd_run(config, entries)
        return _cmd_sweep(config, args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        print("usage: unlearn-audit {" + ",".join(SUBCOMMANDS) + "} "
              "[--config FILE] [--seed N] [--out DIR] [--method M] "
              "[--epochs N] [--lr X] [--rates A,B,...]", file=sys.stderr)
        return 1
    except PhaseError as exc:
        print(f"error in {exc.phase}: {exc.cause}", file=sys.stderr)
        return 2
    except UnlearnAuditError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
