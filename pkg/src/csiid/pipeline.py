"""Stage composition shared by the CLI: manifest -> sessions -> dataset -> model."""

from __future__ import annotations

import contextlib
import json
import numpy as np

from .autodiff import ShapeError
from .checkpoint import load_checkpoint, save_checkpoint
from .dataset import build_dataset, read_manifest
from .ingest import extract_amplitude_phase, parse_csi_log
from .model import TransformerConfig, build_model
from .preprocess import preprocess_session
from .training import evaluate_metrics, load_state, train_loop


@contextlib.contextmanager
def stage(name):
    """Tag exceptions escaping the block with the pipeline stage that raised them."""
    try:
        yield
    except Exception as exc:
        if not hasattr(exc, "stage"):
            exc.stage = name
        raise


def load_matrices(manifest, cfg):
    with stage("manifest"):
        entries = read_manifest(manifest)
    fmt, pre = cfg.format_config(), cfg.preprocess_config()
    out = []
    for entry in entries:
        with stage("ingest"):
            m = extract_amplitude_phase(parse_csi_log(entry.path, fmt))
        with stage("preprocess"):
            out.append((preprocess_session(m, pre), entry.label))
    return out


def dataset_from_manifest(manifest, cfg):
    matrices = load_matrices(manifest, cfg)
    with stage("dataset"):
        return build_dataset(matrices, cfg.dataset_config(), reduced=cfg["reduce.temporal"])


def train_model(ds, cfg, kind=None, on_epoch=None):
    kind = kind or cfg["model.type"]
    with stage("model"):
        mcfg = cfg.model_config(ds.window_len, ds.subcarriers, ds.classes)
        model = build_model(kind, mcfg, seed=cfg.seed, dtype=cfg.dtype)
    with stage("train"):
        result = train_loop(model, ds, cfg.train_config(), on_epoch=on_epoch)
    return model, result


def checkpoint_config(model, cfg, result):
    return {
        "model": model.kind,
        "model_config": model.cfg.to_dict(),
        "dtype": model.dtype.name,
        "run_config": dict(cfg.values),
        "training": {"best_epoch": result.best_epoch, "epochs_run": result.epochs_run, "seed": cfg.seed},
    }


def write_checkpoint(path, model, cfg, result):
    save_checkpoint(path, model, checkpoint_config(model, cfg, result))


def model_from_checkpoint(path):
    config, params = load_checkpoint(path)
    mcfg = TransformerConfig(**config["model_config"])
    model = build_model(config["model"], mcfg, seed=config["training"]["seed"], dtype=np.dtype(config["dtype"]))
    load_state(model, params)
    return model.eval(), config


def check_compatible(model, ds):
    want = (model.cfg.window, model.cfg.subcarriers, model.cfg.classes)
    have = (ds.window_len, ds.subcarriers, ds.classes)
    if want != have:
        raise ShapeError(
            f"checkpoint expects (window, K, classes) = {want} but the data provides {have}"
        )


def evaluate(model, ds, split="test"):
    with stage("evaluate"):
        return evaluate_metrics(model, *ds.arrays(split), classes=ds.classes)


def metrics_document(model, metrics, result_info, seed):
    doc = {
        "model": model.kind,
        "accuracy": metrics.accuracy,
        "macro_f1": metrics.macro_f1,
        "macro_precision": metrics.macro_precision,
        "macro_recall": metrics.macro_recall,
        "confusion": metrics.confusion.tolist(),
        "epochs_run": result_info["epochs_run"],
        "best_epoch": result_info["best_epoch"],
        "seed": seed,
        "checkpoint_selection": "best_validation_epoch",
        "per_class": metrics.to_dict()["per_class"],
    }
    return doc


def write_json(path, doc):
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def heatmap_grid(session, cfg):
    """Time x subcarrier amplitude grid over the configured span; returns (grid, times)."""
    m = extract_amplitude_phase(session)
    if cfg["heatmap.stage"] == "preprocessed":
        m = preprocess_session(m, cfg.preprocess_config())
    elif cfg["heatmap.stage"] != "raw":
        raise ValueError(f"heatmap.stage must be 'raw' or 'preprocessed', got {cfg['heatmap.stage']!r}")
    fs = m.sample_rate_hz
    start = int(round(cfg["heatmap.start_s"] * fs))
    rows = int(round(cfg["heatmap.span_s"] * fs))
    if start < 0 or rows < 1 or start + rows > m.amplitude.shape[0]:
        raise ValueError(
            f"heatmap span [{cfg['heatmap.start_s']}, {cfg['heatmap.start_s'] + cfg['heatmap.span_s']}) s "
            f"lies outside the session ({m.amplitude.shape[0] / fs:.2f} s)"
        )
    times = (start + np.arange(rows)) / fs
    return m.amplitude[start : start + rows], times, m.subcarrier_indices


def write_grid_csv(path, grid, times, indices):
    header = "time_s," + ",".join(f"sc{int(k)}" for k in indices)
    body = "\n".join(
        f"{t:.4f}," + ",".join(f"{v:.6g}" for v in row) for t, row in zip(times, grid)
    )
    path.write_text(header + "\n" + body + "\n")


def write_pgm(path, grid):
    """8-bit binary PGM, subcarriers as rows and time as columns, min-max scaled."""
    img = np.asarray(grid, dtype=np.float64).T[::-1]
    lo, hi = img.min(), img.max()
    scaled = np.zeros_like(img) if hi == lo else (img - lo) / (hi - lo) * 255.0
    pixels = np.rint(scaled).astype(np.uint8)
    h, w = pixels.shape
    path.write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())
