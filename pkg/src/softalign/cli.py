"""Command-line entry point tying the pipeline together.

Subcommands: synth, curate, split, train, gridsearch, compare,
export-plots. Every run writes a ``run_manifest.json`` next to its
outputs recording the command, the fully resolved configuration, the
input/output paths, the toolkit version and the wall-clock duration, so
any run is replayable from its manifest alone. Config files are flat
JSON whose keys match the TrainConfig / GridSpace field names; explicit
command-line flags override file values.

Exit codes: 0 success, 1 validation or usage error, 2 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np

from . import __version__
from .data_model import (
    SynthSpec,
    generate_synthetic,
    load_dataset,
    load_split,
    make_splits,
    save_split,
    write_dataset,
)
from .errors import ValidationError
from .experiment import (
    GridSpace,
    grid_search,
    run_comparison,
    write_grid_ledger_csv,
    write_report_json,
    write_seed_metrics_csv,
)
from .metrics import write_per_sample_csv
from .nn_core import predict_proba, save_params
from .targets import CurationSpec, bin_populations, curate_stratified, write_curation_report
from .trainer import TrainConfig, train


class CliUsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        raise CliUsageError(message)


def _load_config_file(path) -> dict:
    try:
        with Path(path).open("r", encoding="utf-8") as fh:
            obj = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: config is not valid JSON ({exc})") from exc
    if not isinstance(obj, dict):
        raise ValidationError(f"{path}: config must be a JSON object")
    return obj


def _build_train_config(args, overrides: dict) -> TrainConfig:
    """File values first, then explicit flags; unknown keys are rejected."""
    cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        known = {f.name for f in fields(TrainConfig)}
        unknown = set(file_cfg) - known - {f.name for f in fields(GridSpace)}
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        cfg.update({k: v for k, v in file_cfg.items() if k in known})
    cfg.update({k: v for k, v in overrides.items() if v is not None})
    if "split_ratios" in cfg:
        cfg["split_ratios"] = tuple(cfg["split_ratios"])
    try:
        return TrainConfig(**cfg)
    except TypeError as exc:
        raise ValidationError(f"bad training config: {exc}") from exc


def _build_grid_space(args) -> GridSpace:
    cfg = {}
    if getattr(args, "config", None):
        file_cfg = _load_config_file(args.config)
        known = {f.name for f in fields(GridSpace)}
        cfg.update({k: tuple(v) for k, v in file_cfg.items() if k in known})
    try:
        return GridSpace(**cfg)
    except TypeError as exc:
        raise ValidationError(f"bad grid space: {exc}") from exc


def _resolve_splits(args, dataset, default_ratios=(0.7, 0.15, 0.15)):
    if getattr(args, "split", None):
        return load_split(args.split, dataset)
    ratios = tuple(float(r) for r in args.ratios.split(",")) if args.ratios else default_ratios
    return make_splits(dataset, ratios, seed=args.seed if args.seed is not None else 0)


def _write_run_manifest(out_dir: Path, command: str, config: dict, inputs, outputs, t0: float):
    manifest = {
        "command": command,
        "config": config,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "toolkit_version": __version__,
        "duration_seconds": round(time.time() - t0, 3),
    }
    path = out_dir / "run_manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return path


def _out_dir(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# subcommands


def _cmd_synth(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    spec = SynthSpec(
        num_samples=args.num_samples,
        num_classes=args.num_classes,
        embedding_dim=args.embedding_dim,
        annotations_per_sample=args.annotations_per_sample,
        ambiguity=args.ambiguity,
        noise_scale=args.noise_scale,
        seed=args.seed if args.seed is not None else 0,
    )
    dataset = generate_synthetic(spec)
    manifest_path = write_dataset(dataset, out)
    outputs = [manifest_path, out / "embeddings.bin", out / "annotations.jsonl"]
    _write_run_manifest(out, "synth", asdict(spec), [], outputs, t0)
    print(f"wrote {len(dataset)} samples to {manifest_path}")
    return 0


def _cmd_curate(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    spec = CurationSpec(
        num_bins=args.bins, cap_per_bin=args.cap, seed=args.seed if args.seed is not None else 0
    )
    curated = curate_stratified(dataset, spec)
    manifest_path = write_dataset(curated, out)
    report_path = out / "curation_report.csv"
    write_curation_report(report_path, dataset, curated, spec.num_bins)
    _write_run_manifest(
        out, "curate", asdict(spec), [args.manifest], [manifest_path, report_path], t0
    )
    print(f"curated {len(dataset)} -> {len(curated)} samples; report at {report_path}")
    return 0


def _cmd_split(args) -> int:
    t0 = time.time()
    dataset = load_dataset(args.manifest)
    ratios = tuple(float(r) for r in args.ratios.split(","))
    seed = args.seed if args.seed is not None else 0
    splits = make_splits(dataset, ratios, seed=seed)
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    save_split(out_path, dataset, splits)
    _write_run_manifest(
        out_path.parent,
        "split",
        {"ratios": list(ratios), "seed": seed},
        [args.manifest],
        [out_path],
        t0,
    )
    print(
        f"split {len(dataset)} samples into {splits.train.size}/{splits.val.size}/{splits.test.size}"
    )
    return 0


def _cmd_train(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    config = _build_train_config(
        args,
        {
            "label_mode": args.label_mode,
            "seed": args.seed,
            "learning_rate": args.learning_rate,
            "batch_size": args.batch_size,
            "max_epochs": args.max_epochs,
        },
    )
    splits = _resolve_splits(args, dataset, default_ratios=config.split_ratios)
    epochs_csv = out / "epochs.csv"
    result = train(dataset, splits, config, epoch_csv=epochs_csv)

    ckpt = out / "checkpoint.bin"
    save_params(result.best_params, ckpt)
    result_payload = {
        "config": asdict(config),
        "stopped_epoch": result.stopped_epoch,
        "best_epoch": result.best_epoch,
        "best_val_loss": result.best_val_loss,
        "epochs": [asdict(e) for e in result.epochs],
        "test": None
        if result.test_summary is None
        else {
            "mean_kl": result.test_summary.mean_kl,
            "accuracy": result.test_summary.accuracy,
            "entropy_correlation": result.test_summary.entropy_correlation,
        },
    }
    result_path = out / "result.json"
    result_path.write_text(json.dumps(result_payload, indent=2) + "\n", encoding="utf-8")

    outputs = [result_path, epochs_csv, ckpt]
    if splits.test.size > 0:
        probs = predict_proba(result.best_params, dataset.embeddings[splits.test])
        counts = dataset.counts[splits.test]
        ids = [dataset.ids[i] for i in splits.test]
        per_sample = out / "per_sample.csv"
        write_per_sample_csv(per_sample, ids, probs, counts)
        preds_path = out / "predictions.csv"
        _write_predictions_csv(preds_path, ids, counts, probs, dataset.class_names)
        outputs += [per_sample, preds_path]
    _write_run_manifest(out, "train", asdict(config), [args.manifest], outputs, t0)
    print(f"trained {config.label_mode} model: best val loss {result.best_val_loss:.6f} at epoch {result.best_epoch}")
    return 0


def _write_predictions_csv(path, ids, counts, probs, class_names) -> None:
    """Per-sample annotation distribution next to the predicted one."""
    counts = np.asarray(counts, dtype=np.float64)
    annot = counts / counts.sum(axis=1, keepdims=True)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["id"]
            + [f"annot_{c}" for c in class_names]
            + [f"pred_{c}" for c in class_names]
        )
        for i, sample_id in enumerate(ids):
            writer.writerow(
                [sample_id]
                + [f"{v:.12g}" for v in annot[i]]
                + [f"{v:.12g}" for v in probs[i]]
            )


def _cmd_gridsearch(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    base = _build_train_config(args, {"label_mode": args.label_mode})
    space = _build_grid_space(args)
    splits = _resolve_splits(args, dataset, default_ratios=base.split_ratios)
    result = grid_search(
        dataset,
        splits,
        space,
        args.label_mode or base.label_mode,
        base=base,
        search_seed=args.seed if args.seed is not None else 0,
        jobs=args.jobs,
    )
    ledger_path = out / "grid_ledger.csv"
    write_grid_ledger_csv(ledger_path, result)
    best_path = out / "best_config.json"
    best_path.write_text(json.dumps(asdict(result.best_config), indent=2) + "\n", encoding="utf-8")
    _write_run_manifest(
        out,
        "gridsearch",
        {"space": asdict(space), "base": asdict(base)},
        [args.manifest],
        [ledger_path, best_path],
        t0,
    )
    print(f"evaluated {len(result.entries)} configs; best written to {best_path}")
    return 0


def _cmd_compare(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    dataset = load_dataset(args.manifest)
    base = _build_train_config(args, {})
    space = _build_grid_space(args)
    splits = _resolve_splits(args, dataset, default_ratios=base.split_ratios)
    report, details = run_comparison(
        dataset,
        splits,
        space,
        n_seeds=args.seeds,
        base=base,
        search_seed=args.seed if args.seed is not None else 0,
        base_seed=args.seed if args.seed is not None else 0,
        jobs=args.jobs,
    )
    outputs = []
    report_json = out / "report.json"
    write_report_json(report_json, report)
    report_txt = out / "report.txt"
    report_txt.write_text(report.render_text() + "\n", encoding="utf-8")
    seed_csv = out / "seed_metrics.csv"
    write_seed_metrics_csv(seed_csv, {dataset.name: {m: details[m]["sweep"] for m in details}})
    outputs += [report_json, report_txt, seed_csv]

    runs_dir = out / "runs"
    runs_dir.mkdir(exist_ok=True)
    for mode, det in details.items():
        ledger = out / f"grid_ledger_{mode}.csv"
        write_grid_ledger_csv(ledger, det["grid"])
        outputs.append(ledger)
        for res in det["results"]:
            curve = runs_dir / f"{mode}_seed{res.config.seed}_epochs.csv"
            with curve.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epoch", "split", "loss", "accuracy", "mean_kl"])
                for e in res.epochs:
                    writer.writerow(
                        [e.epoch, "val", f"{e.val_loss:.12g}", f"{e.val_accuracy:.12g}", f"{e.val_mean_kl:.12g}"]
                    )
                    writer.writerow([e.epoch, "train", f"{e.train_loss:.12g}", "", ""])
            outputs.append(curve)
    _write_run_manifest(
        out,
        "compare",
        {"space": asdict(space), "base": asdict(base), "n_seeds": args.seeds, "seed": args.seed},
        [args.manifest],
        outputs,
        t0,
    )
    print(report.render_text())
    return 0


def _cmd_export_plots(args) -> int:
    t0 = time.time()
    out = _out_dir(args)
    outputs = []
    inputs = []
    if args.manifest:
        inputs.append(args.manifest)
        dataset = load_dataset(args.manifest)
        pops = bin_populations(dataset, args.bins)
        hist_path = out / "entropy_histogram.csv"
        with hist_path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["bin", "entropy_lo", "entropy_hi", "count"])
            for b, count in enumerate(pops):
                writer.writerow([b, b / args.bins, (b + 1) / args.bins, int(count)])
        outputs.append(hist_path)
    if args.results:
        inputs.append(args.results)
        results_dir = Path(args.results)
        curve_files = sorted(results_dir.rglob("*epochs.csv"))
        if curve_files:
            curves_path = out / "validation_curves.csv"
            with curves_path.open("w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                writer.writerow(["source", "epoch", "split", "loss", "accuracy", "mean_kl"])
                for cf in curve_files:
                    with cf.open("r", encoding="utf-8") as src:
                        reader = csv.reader(src)
                        next(reader, None)
                        for row in reader:
                            writer.writerow([cf.stem] + row)
            outputs.append(curves_path)
    if not outputs:
        raise ValidationError("export-plots needs --manifest and/or --results")
    _write_run_manifest(
        out, "export-plots", {"bins": args.bins}, inputs, outputs, t0
    )
    print(f"wrote {len(outputs)} plot-data files to {out}")
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> _Parser:
    parser = _Parser(
        prog="softalign",
        description="Train classification heads on soft or hard labels and "
        "measure how well predictions track annotation distributions.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--num-samples", type=int, default=1000)
    p.add_argument("--num-classes", type=int, default=5)
    p.add_argument("--embedding-dim", type=int, default=32)
    p.add_argument("--annotations-per-sample", type=int, default=20)
    p.add_argument("--ambiguity", type=float, default=0.5)
    p.add_argument("--noise-scale", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("curate", help="entropy-stratified subsampling")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--cap", type=int, default=200)
    p.add_argument("--seed", type=int, default=None)
    p.set_defaults(func=_cmd_curate)

    p = sub.add_parser("split", help="write a train/val/test split file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--ratios", default="0.7,0.15,0.15")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("train", help="train one classification head")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None, help="split file; derived from ratios otherwise")
    p.add_argument("--ratios", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--label-mode", choices=("soft", "hard"), default=None)
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("gridsearch", help="exhaustive hyperparameter search")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--ratios", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--label-mode", choices=("soft", "hard"), default="soft")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_gridsearch)

    p = sub.add_parser("compare", help="full soft-vs-hard protocol with significance")
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default=None)
    p.add_argument("--ratios", default=None)
    p.add_argument("--config", default=None)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_compare)

    p = sub.add_parser("export-plots", help="CSV data behind the standard figures")
    p.add_argument("--manifest", default=None)
    p.add_argument("--results", default=None, help="directory of train/compare outputs")
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_export_plots)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except CliUsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
