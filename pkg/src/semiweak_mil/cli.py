from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import textwrap
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np
from dotenv import load_dotenv

from semiweak_mil.data import cross_validation_splits, load_feature_store, save_feature_store
from semiweak_mil.data.bags import Dataset
from semiweak_mil.data.synth import SynthSpec, default_benchmark, default_benchmark_3class, generate, summarize
from semiweak_mil.errors import ConfigError, DimensionError, OracleError, SemiweakError, StoreWriteError
from semiweak_mil.model import Checkpoint, forward, load_checkpoint, save_checkpoint
from semiweak_mil.observability import TrainingMetrics, configure_logging
from semiweak_mil.pseudobags import RoundPlan, iis_shapley
from semiweak_mil.training import RoundRecord, TrainConfig, evaluate, train, write_pseacc_csv

_ACCENT_DEFAULT = "cyan"
_RESET = "\033[0m"
_COLOUR_CODES: Mapping[str, str] = {
    "cyan": "\033[38;5;45m",
    "violet": "\033[38;5;177m",
    "green": "\033[38;5;48m",
    "amber": "\033[38;5;214m",
    "red": "\033[38;5;203m",
}
_METHODS = ("adapse", "iis", "random")


@dataclass(slots=True)
class _CLIContext:
    accent: str
    workers: int | None = None
    metrics_file: str | None = None


def _colourise(text: str, style: str) -> str:
    colour = _COLOUR_CODES.get(style, _COLOUR_CODES.get("cyan", ""))
    reset = _RESET if colour else ""
    return f"{colour}{text}{reset}"


def _panel(title: str, body: str, style: str = "cyan") -> str:
    raw_lines: list[str] = []
    for line in body.splitlines() or [""]:
        if not line.strip():
            raw_lines.append("")
            continue
        raw_lines.extend(textwrap.wrap(line, width=72) or [""])

    content_width = max([len(title), *(len(line) for line in raw_lines)])
    border = "=" * (content_width + 4)
    title_line = f"= {title.center(content_width)} ="
    body_lines = [f"| {line.ljust(content_width)} |" for line in (raw_lines or [""])]
    panel_lines = [border, title_line, border, *body_lines, border]
    coloured = [_colourise(line, style) for line in panel_lines]
    return "\n".join(coloured)


def _print_panel(title: str, body: str, style: str = "cyan") -> None:
    # stdout is reserved for machine-readable output (``eval`` metrics).
    print(_panel(title, body, style), file=sys.stderr)


# -- configuration ----------------------------------------------------------------


def _read_json(path: str, what: str) -> Mapping[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            data = json.load(handle)
    except OSError as exc:
        raise ConfigError(f"Cannot read {what}.", details=f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{what.capitalize()} is not valid JSON.", details=f"{path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{what.capitalize()} must be a JSON object.", details=path)
    return data


def _load_config(args: argparse.Namespace, ctx: _CLIContext) -> TrainConfig:
    values: dict[str, Any] = {}
    if ctx.workers is not None:
        values["workers"] = ctx.workers
    if getattr(args, "config", None):
        values.update(_read_json(args.config, "config file"))
    if getattr(args, "preset", None):
        cfg = TrainConfig.preset(args.preset, **values)
    else:
        cfg = TrainConfig.from_mapping(values)
    return cfg.with_overrides(getattr(args, "overrides", None) or [])


def _metrics_sink(args: argparse.Namespace, ctx: _CLIContext) -> tuple[TrainingMetrics, str | None]:
    return TrainingMetrics(), getattr(args, "metrics_file", None) or ctx.metrics_file


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(header)
            writer.writerows(rows)
    except OSError as exc:
        raise StoreWriteError("Failed to write CSV output.", details=f"{path}: {exc}") from exc


def _headline(metrics: Mapping[str, Any] | None) -> str:
    if metrics is None:
        return "no test split"
    auc = metrics["auc"]
    auc_text = "n/a" if auc is None else f"{auc:.4f}"
    return f"ACC {metrics['acc']:.4f} | AUC {auc_text} | F1 {metrics['f1']:.4f}"


# -- subcommands ------------------------------------------------------------------


def _synth_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    usage = "Usage: synth (SPEC OUT | --default OUT | --default-3class OUT)."
    if args.default or args.default_3class:
        if len(args.paths) != 1:
            raise ConfigError(usage)
        spec = default_benchmark_3class() if args.default_3class else default_benchmark()
        out = args.paths[0]
    else:
        if len(args.paths) != 2:
            raise ConfigError(usage)
        spec = SynthSpec.from_mapping(_read_json(args.paths[0], "synthetic spec"))
        out = args.paths[1]

    ds = generate(spec)
    save_feature_store(ds, out)
    summary = summarize(ds)
    balance = ", ".join(f"{name}={count}" for name, count in summary["class_balance"].items())
    splits = ", ".join(f"{name}={count}" for name, count in summary["splits"].items())
    body = (
        f"{summary['bags']} bags, {summary['instances']} instances, d={summary['dim']}\n"
        f"Splits: {splits}\nClass balance: {balance}\nWritten to {out}"
    )
    _print_panel("Synthetic dataset", body, ctx.accent)
    return 0


def _plan_writer(out: Path) -> Callable[[RoundRecord, RoundPlan], None]:
    """Round callback that keeps each round's pseudo bag plan as ``plans/round_XX.json``."""

    def write(record: RoundRecord, plan: RoundPlan) -> None:
        path = out / "plans" / f"round_{record.round:02d}.json"
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(plan.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        except OSError as exc:
            raise StoreWriteError("Failed to write pseudo bag plan.", details=f"{path}: {exc}") from exc

    return write


def _train_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    ds = load_feature_store(args.data)
    cfg = _load_config(args, ctx)
    metrics, metrics_file = _metrics_sink(args, ctx)
    _print_panel(
        "Training",
        f"{len(ds.subset('train'))} train bags, {cfg.rounds} rounds, assignment={cfg.assignment}, seed={cfg.seed}",
        ctx.accent,
    )

    out = Path(args.out)
    report = train(ds, cfg, metrics=metrics, round_callback=_plan_writer(out))
    report.write(out / "report.json")
    write_pseacc_csv(report.pseacc_rows(), out / "pseacc.csv")
    if report.checkpoint is not None:
        save_checkpoint(report.checkpoint, out / "best.ckpt")
    if metrics_file:
        metrics.write(metrics_file)
    _print_panel(
        "Training complete",
        f"Best round {report.best_round} (val {report.best_val_score:.4f})\nTest: {_headline(report.test_metrics)}\n"
        f"Artifacts in {out}",
        "green",
    )
    return 0


def _matching_checkpoint(path: str, ds: Dataset) -> Checkpoint:
    checkpoint = load_checkpoint(path)
    params = checkpoint.params
    if params.dim != ds.dim or params.num_classes != ds.num_classes:
        raise DimensionError(
            "Checkpoint does not match the dataset.",
            details=f"checkpoint d={params.dim}, C={params.num_classes}; data d={ds.dim}, C={ds.num_classes}",
        )
    return checkpoint


def _eval_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    ds = load_feature_store(args.data)
    checkpoint = _matching_checkpoint(args.checkpoint, ds)
    bags = ds.subset(args.split)
    if not bags:
        raise ConfigError("Requested split is empty.", details=args.split)
    result = evaluate(checkpoint.params, bags, class_names=ds.priority.classes, workers=ctx.workers or 1)
    print(json.dumps(result.metrics.to_dict(), indent=2, sort_keys=True))

    if args.predictions:
        dump = result.dump
        header = ["bag_id", "true", "pred", *(f"prob_{name}" for name in ds.priority.classes)]
        rows = [
            [bag_id, int(true), int(pred), *(repr(float(value)) for value in probs)]
            for bag_id, true, pred, probs in zip(dump.ids, dump.true, dump.pred, dump.probs)
        ]
        _write_csv(Path(args.predictions), header, rows)
    _print_panel("Evaluation", f"{args.split}: {_headline(result.metrics.to_dict())}", ctx.accent)
    return 0


def _pseacc_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    ds = load_feature_store(args.data)
    if not ds.has_oracle:
        raise OracleError("PseAcc comparison needs oracle instance labels in the dataset.")
    methods = [method.strip() for method in args.methods.split(",") if method.strip()]
    unknown = sorted(set(methods) - set(_METHODS))
    if not methods or unknown:
        raise ConfigError("Unknown assignment methods.", details=", ".join(unknown) or "none given")
    cfg = _load_config(args, ctx)
    metrics, metrics_file = _metrics_sink(args, ctx)

    rows: list[tuple[int, str, float]] = []
    lines: list[str] = []
    for method in methods:
        report = train(ds, cfg.updated(assignment=method), metrics=metrics)
        method_rows = report.pseacc_rows()
        rows.extend(method_rows)
        mean = float(np.mean([value for _, _, value in method_rows])) if method_rows else float("nan")
        lines.append(f"{method}: mean PseAcc {mean:.4f} over {len(method_rows)} rounds")

    write_pseacc_csv(rows, args.out)
    if metrics_file:
        metrics.write(metrics_file)
    _print_panel("PseAcc", "\n".join([*lines, f"Written to {args.out}"]), "green")
    return 0


def _heatmap_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    ds = load_feature_store(args.data)
    checkpoint = _matching_checkpoint(args.checkpoint, ds)
    bag = ds.bag(args.bag_id)
    attention = forward(checkpoint.params, bag.features).attention

    header = ["instance_index", "attention_score"]
    columns: list[Sequence[Any]] = [range(bag.num_instances), [repr(float(value)) for value in attention]]
    if args.iis == "shapley":
        samples = max(1, args.samples_per_instance * bag.num_instances)
        shapley = iis_shapley(checkpoint.params, bag, samples, checkpoint.seed, workers=ctx.workers or 1)
        header.append("shapley_score")
        columns.append([repr(float(value)) for value in shapley.scores])
    if bag.instance_labels is not None:
        header.append("oracle_label")
        columns.append([int(label) for label in bag.instance_labels])

    _write_csv(Path(args.out), header, list(zip(*columns)))
    _print_panel("Heatmap", f"{bag.id}: {bag.num_instances} instances written to {args.out}", ctx.accent)
    return 0


def _cv_command(args: argparse.Namespace, ctx: _CLIContext) -> int:
    ds = load_feature_store(args.data)
    cfg = _load_config(args, ctx)
    metrics, metrics_file = _metrics_sink(args, ctx)
    out = Path(args.out)

    folds: list[dict[str, Any]] = []
    splits = cross_validation_splits(ds, folds=args.folds, val_fraction=args.val_fraction, seed=cfg.seed)
    for index, fold in enumerate(splits):
        report = train(fold, cfg, metrics=metrics)
        report.write(out / f"fold_{index}" / "report.json")
        if report.checkpoint is not None:
            save_checkpoint(report.checkpoint, out / f"fold_{index}" / "best.ckpt")
        folds.append({"fold": index, "best_round": report.best_round, "test": report.test_metrics})
        _print_panel(f"Fold {index}", _headline(report.test_metrics), ctx.accent)

    aggregate: dict[str, dict[str, float]] = {}
    for key in ("acc", "auc", "f1"):
        values = [fold["test"][key] for fold in folds if fold["test"] and fold["test"][key] is not None]
        if values:
            aggregate[key] = {"mean": float(np.mean(values)), "std": float(np.std(values))}
    summary = {"folds": folds, "summary": aggregate, "config": cfg.to_dict()}
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "cv_summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as exc:
        raise StoreWriteError("Failed to write cross-validation summary.", details=str(exc)) from exc
    if metrics_file:
        metrics.write(metrics_file)
    body = "\n".join(f"{key.upper()}: {stats['mean']:.4f} +/- {stats['std']:.4f}" for key, stats in aggregate.items())
    _print_panel("Cross-validation", body or "No test metrics available.", "green")
    return 0


# -- parser -----------------------------------------------------------------------


def _add_config_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="Flat JSON file with TrainConfig keys.")
    parser.add_argument("--preset", choices=["bracs", "camelyon16", "tcga-lung"], help="Dataset preset for M/L_max.")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a configuration key (repeatable).",
    )
    parser.add_argument("--metrics-file", help="Write Prometheus text-format training counters to this path.")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description="Semi-weakly supervised multiple instance learning.")
    parser.add_argument(
        "--accent",
        default=_ACCENT_DEFAULT,
        choices=sorted(_COLOUR_CODES.keys()),
        help="Accent colour for decorated output.",
    )

    subparsers = parser.add_subparsers(dest="command", required=True)

    synth_parser = subparsers.add_parser("synth", help="Generate a synthetic feature store with oracle labels.")
    synth_parser.add_argument("paths", nargs="+", metavar="PATH", help="SPEC OUT, or OUT with --default.")
    defaults = synth_parser.add_mutually_exclusive_group()
    defaults.add_argument("--default", action="store_true", help="Use the canonical binary benchmark.")
    defaults.add_argument("--default-3class", action="store_true", help="Use the three-class benchmark.")
    synth_parser.set_defaults(handler=_synth_command)

    train_parser = subparsers.add_parser("train", help="Train a model and write report, PseAcc curve and checkpoint.")
    train_parser.add_argument("data", help="Feature store directory.")
    train_parser.add_argument("out", help="Output directory.")
    _add_config_arguments(train_parser)
    train_parser.set_defaults(handler=_train_command)

    eval_parser = subparsers.add_parser("eval", help="Evaluate a checkpoint and print metrics JSON.")
    eval_parser.add_argument("checkpoint", help="Checkpoint file.")
    eval_parser.add_argument("data", help="Feature store directory.")
    eval_parser.add_argument("--split", default="test", choices=["train", "val", "test"], help="Split to evaluate.")
    eval_parser.add_argument("--predictions", help="Also write per-bag predictions to this CSV.")
    eval_parser.set_defaults(handler=_eval_command)

    pseacc_parser = subparsers.add_parser("pseacc", help="Compare pseudo label accuracy of assignment methods.")
    pseacc_parser.add_argument("data", help="Feature store directory with oracle labels.")
    pseacc_parser.add_argument("out", help="Output CSV path.")
    pseacc_parser.add_argument(
        "--methods",
        default="adapse,random",
        help="Comma-separated subset of adapse,iis,random.",
    )
    _add_config_arguments(pseacc_parser)
    pseacc_parser.set_defaults(handler=_pseacc_command)

    heatmap_parser = subparsers.add_parser("heatmap", help="Export per-instance importance for one bag.")
    heatmap_parser.add_argument("checkpoint", help="Checkpoint file.")
    heatmap_parser.add_argument("data", help="Feature store directory.")
    heatmap_parser.add_argument("bag_id", help="Bag to explain.")
    heatmap_parser.add_argument("out", help="Output CSV path.")
    heatmap_parser.add_argument("--iis", choices=["attention", "shapley"], default="attention", help="IIS estimator.")
    heatmap_parser.add_argument(
        "--samples-per-instance",
        type=int,
        default=200,
        help="Monte-Carlo permutations per instance for --iis shapley.",
    )
    heatmap_parser.set_defaults(handler=_heatmap_command)

    cv_parser = subparsers.add_parser("cv", help="Stratified k-fold cross-validation.")
    cv_parser.add_argument("data", help="Feature store directory.")
    cv_parser.add_argument("out", help="Output directory.")
    cv_parser.add_argument("--folds", type=int, default=3, help="Number of folds.")
    cv_parser.add_argument("--val-fraction", type=float, default=0.2, help="Validation share of non-test bags.")
    _add_config_arguments(cv_parser)
    cv_parser.set_defaults(handler=_cv_command)

    return parser


def _context_from_env(accent: str) -> _CLIContext:
    workers_env = os.environ.get("SEMIWEAK_MIL_WORKERS")
    try:
        workers = int(workers_env) if workers_env else None
    except ValueError as exc:
        raise ConfigError("SEMIWEAK_MIL_WORKERS must be an integer.", details=workers_env) from exc
    return _CLIContext(
        accent=accent,
        workers=workers,
        metrics_file=os.environ.get("SEMIWEAK_MIL_METRICS_FILE") or None,
    )


def main(argv: list[str] | None = None) -> int:
    load_dotenv()
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    handler: Callable[[argparse.Namespace, _CLIContext], int] | None = getattr(args, "handler", None)
    if handler is None:
        parser.print_help()
        return 2
    try:
        context = _context_from_env(args.accent)
        return handler(args, context)
    except SemiweakError as exc:
        _print_panel(args.command.capitalize(), f"{exc.code}: {exc}", "red")
        return exc.exit_code
    except KeyboardInterrupt:
        _print_panel(args.command.capitalize(), "Interrupted by user", "amber")
        return 130


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
