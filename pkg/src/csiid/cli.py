"""Command-line entry point: synth, ingest, preprocess, train, eval, heatmap.

Any configuration key can be overridden with ``--section.key=value``.
Exit codes: 0 success, 1 internal error, 2 input error, 3 shape/config
mismatch, 4 integrity failure.
"""

from __future__ import annotations

import argparse
import datetime
import logging
import sys
from pathlib import Path

from . import pipeline
from .autodiff import ShapeError
from .checkpoint import IntegrityError
from .config import ConfigError, RunConfig, parse_overrides, read_config_file
from .dataset import DatasetError, write_dataset_cache
from .ingest import IngestError, format_report, parse_csi_log, validate_session
from .synth import write_synthetic_corpus
from .training import format_table, write_history

log = logging.getLogger("csiid")

EXIT_OK, EXIT_INTERNAL, EXIT_INPUT, EXIT_SHAPE, EXIT_INTEGRITY = 0, 1, 2, 3, 4


class InputError(ValueError):
    pass


def _run_dir(args, command):
    if args.run_dir:
        path = Path(args.run_dir)
    else:
        stamp = datetime.datetime.now().strftime("%Y%m%d-%H%M%S")
        path = Path(args.out) / f"{command}-{stamp}"
        n = 1
        while path.exists():
            path = Path(args.out) / f"{command}-{stamp}-{n}"
            n += 1
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise InputError(f"cannot create output directory {path}: {exc}") from exc
    return path


def _require(path, what):
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} not found: {p}")
    return p


def _echo_config(run_dir, cfg):
    (run_dir / "config.txt").write_text(cfg.dump())
    print(f"run directory: {run_dir}")
    print(f"seed: {cfg.seed}")


def cmd_synth(args, cfg):
    run_dir = _run_dir(args, "synth")
    _echo_config(run_dir, cfg)
    paths, manifest = write_synthetic_corpus(cfg.synth_config(), run_dir)
    for p in paths:
        print(p)
    print(f"manifest: {manifest}")
    return EXIT_OK


def cmd_ingest(args, cfg):
    log_path = _require(args.log, "CSI log")
    run_dir = _run_dir(args, "ingest")
    _echo_config(run_dir, cfg)
    with pipeline.stage("ingest"):
        report = validate_session(parse_csi_log(log_path, cfg.format_config()))
    report["source"] = str(log_path)
    pipeline.write_json(run_dir / "summary.json", report)
    text = format_report(report)
    (run_dir / "report.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_preprocess(args, cfg):
    manifest = _require(args.manifest, "manifest")
    run_dir = _run_dir(args, "preprocess")
    _echo_config(run_dir, cfg)
    ds = pipeline.dataset_from_manifest(manifest, cfg)
    write_dataset_cache(run_dir / "dataset.csiw", ds)
    summary = {
        "classes": ds.classes,
        "window_len": ds.window_len,
        "subcarriers": ds.subcarriers,
        "windows": {name: len(ds.split(name)) for name in ("train", "val", "test")},
    }
    pipeline.write_json(run_dir / "summary.json", summary)
    print(f"dataset cache: {run_dir / 'dataset.csiw'}")
    print(f"windows: {summary['windows']}")
    return EXIT_OK


def _report(run_dir, model, metrics, info, cfg, tag):
    from . import plotting

    doc = pipeline.metrics_document(model, metrics, info, cfg.seed)
    pipeline.write_json(run_dir / "metrics.json", doc)
    table = format_table({model.kind: metrics})
    (run_dir / "table.txt").write_text(table)
    plotting.plot_confusion(metrics.confusion, run_dir / "confusion.png", title=f"{tag} confusion ({model.kind})")
    print(table, end="")
    return doc


def cmd_train(args, cfg):
    manifest = _require(args.manifest, "manifest")
    run_dir = _run_dir(args, "train")
    _echo_config(run_dir, cfg)
    ds = pipeline.dataset_from_manifest(manifest, cfg)
    model, result = pipeline.train_model(ds, cfg, on_epoch=lambda row: print(
        f"epoch {row['epoch']:3d}  loss {row['train_loss']:.5f}  val_acc {row['val_acc']:.4f}"
    ))
    write_history(run_dir / "history.csv", result.history)
    pipeline.write_checkpoint(run_dir / "checkpoint.csim", model, cfg, result)
    metrics = pipeline.evaluate(model, ds)
    info = {"epochs_run": result.epochs_run, "best_epoch": result.best_epoch}
    _report(run_dir, model, metrics, info, cfg, "test")

    from . import plotting

    plotting.plot_history(result.history, run_dir / "history.png")
    print(f"checkpoint: {run_dir / 'checkpoint.csim'}")
    return EXIT_OK


def cmd_eval(args, cfg):
    ckpt = _require(args.checkpoint, "checkpoint")
    manifest = _require(args.manifest, "manifest")
    with pipeline.stage("checkpoint"):
        model, ck_cfg = pipeline.model_from_checkpoint(ckpt)
    # the checkpoint's own run configuration is the base; file and flags still win
    cfg = RunConfig(ck_cfg["run_config"]).updated(cfg.explicit)
    run_dir = _run_dir(args, "eval")
    _echo_config(run_dir, cfg)
    ds = pipeline.dataset_from_manifest(manifest, cfg)
    with pipeline.stage("checkpoint"):
        pipeline.check_compatible(model, ds)
    metrics = pipeline.evaluate(model, ds)
    _report(run_dir, model, metrics, ck_cfg["training"], cfg, "test")
    return EXIT_OK


def cmd_heatmap(args, cfg):
    log_path = _require(args.log, "CSI log")
    run_dir = _run_dir(args, "heatmap")
    _echo_config(run_dir, cfg)
    with pipeline.stage("ingest"):
        session = parse_csi_log(log_path, cfg.format_config())
    with pipeline.stage("heatmap"):
        try:
            grid, times, indices = pipeline.heatmap_grid(session, cfg)
        except ValueError as exc:
            raise InputError(str(exc)) from exc
    pipeline.write_grid_csv(run_dir / "grid.csv", grid, times, indices)
    print(f"grid: {run_dir / 'grid.csv'} ({grid.shape[0]} x {grid.shape[1]})")
    if cfg["heatmap.pgm"]:
        pipeline.write_pgm(run_dir / "grid.pgm", grid)
    if cfg["heatmap.png"]:
        from . import plotting

        plotting.plot_heatmap(grid, times, indices, run_dir / "heatmap.png", title=f"{log_path.name} ({cfg['heatmap.stage']})")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(prog="csiid", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key=value configuration file")
    common.add_argument("--out", default="runs", help="base directory for timestamped run directories")
    common.add_argument("--run-dir", help="exact output directory (overrides --out)")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="write synthetic session logs and a manifest")
    p = sub.add_parser("ingest", parents=[common], help="parse and validate one CSI log")
    p.add_argument("log")
    p = sub.add_parser("preprocess", parents=[common], help="build the windowed dataset cache")
    p.add_argument("manifest")
    p = sub.add_parser("train", parents=[common], help="train and evaluate a model")
    p.add_argument("manifest")
    p = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on the test split")
    p.add_argument("checkpoint")
    p.add_argument("manifest")
    p = sub.add_parser("heatmap", parents=[common], help="export an amplitude heatmap grid")
    p.add_argument("log")
    return parser


def _exit_code(exc):
    if isinstance(exc, IntegrityError):
        return EXIT_INTEGRITY
    if isinstance(exc, ShapeError):
        return EXIT_SHAPE
    if isinstance(exc, (InputError, ConfigError, IngestError, DatasetError, FileNotFoundError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def main(argv=None):
    parser = build_parser()
    args, rest = parser.parse_known_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        explicit = read_config_file(args.config) if args.config else {}
        explicit.update(parse_overrides(rest))
        cfg = RunConfig(explicit)
        handlers = {
            "synth": cmd_synth,
            "ingest": cmd_ingest,
            "preprocess": cmd_preprocess,
            "train": cmd_train,
            "eval": cmd_eval,
            "heatmap": cmd_heatmap,
        }
        return handlers[args.command](args, cfg)
    except Exception as exc:  # noqa: BLE001
        code = _exit_code(exc)
        where = getattr(exc, "stage", None)
        prefix = f"error in stage {where}: " if where else "error: "
        print(prefix + str(exc), file=sys.stderr)
        if code == EXIT_INTERNAL:
            log.exception("internal error")
        return code


if __name__ == "__main__":
    sys.exit(main())
