"""Optimizer, training loop with early stopping, and macro-averaged evaluation."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr: float = 0.001
    batch: int = 32
    max_epochs: int = 50
    patience: int = 10
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.lr < 0 or self.batch <= 0 or self.max_epochs <= 0 or self.patience <= 0:
            raise ValueError(f"invalid training config: {self}")
        if self.patience > self.max_epochs:
            raise ValueError(f"patience {self.patience} exceeds max_epochs {self.max_epochs}")


def cross_entropy_loss(logits, labels):
    """Mean cross-entropy in log-sum-exp form; ``logits`` may be a Tensor or array."""
    if not isinstance(logits, ad.Tensor):
        logits = ad.Tensor(logits)
    return ad.cross_entropy(logits, labels)


class Adam:
    def __init__(self, named_params, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.named_params = list(named_params)
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.named_params}
        self.v = {name: np.zeros_like(p.data) for name, p in self.named_params}

    def step(self):
        for name, p in self.named_params:
            if p.grad is not None and not np.all(np.isfinite(p.grad)):
                raise TrainingError(f"non-finite gradient in parameter {name!r}")
        self.t += 1
        for name, p in self.named_params:
            g = np.zeros_like(p.data) if p.grad is None else p.grad.astype(p.data.dtype, copy=False)
            adam_step(p.data, g, self.m[name], self.v[name], self.t, self.lr, self.beta1, self.beta2, self.eps)


def adam_step(param, grad, m, v, t, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
    """In-place Adam update of ``param`` and its moment buffers at step ``t`` (1-based)."""
    if m.shape != param.shape or v.shape != param.shape or grad.shape != param.shape:
        raise ValueError(f"adam: state shapes {m.shape}/{v.shape} do not match parameter {param.shape}")
    m *= beta1
    m += (1 - beta1) * grad
    v *= beta2
    v += (1 - beta2) * grad * grad
    m_hat = m / (1 - beta1**t)
    v_hat = v / (1 - beta2**t)
    param -= lr * m_hat / (np.sqrt(v_hat) + eps)


@dataclass
class MetricsReport:
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    confusion: np.ndarray
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray

    def to_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "confusion": self.confusion.tolist(),
            "per_class": {
                "precision": self.precision.tolist(),
                "recall": self.recall.tolist(),
                "f1": self.f1.tolist(),
            },
        }


def confusion_matrix(y_true, y_pred, classes):
    cm = np.zeros((classes, classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true), np.asarray(y_pred)), 1)
    return cm


def metrics_from_confusion(cm):
    """Rows are true classes, columns predictions. Empty predicted class gets precision 0."""
    cm = np.asarray(cm, dtype=np.int64)
    tp = np.diag(cm).astype(np.float64)
    predicted = cm.sum(axis=0).astype(np.float64)
    actual = cm.sum(axis=1).astype(np.float64)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    total = cm.sum()
    return MetricsReport(
        accuracy=float(tp.sum() / total) if total else 0.0,
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        confusion=cm,
        precision=precision,
        recall=recall,
        f1=f1,
    )


def evaluate_metrics(model, amp, phase, labels, classes=None):
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("cannot evaluate on an empty split")
    classes = classes or model.cfg.classes
    pred = model.predict(amp, phase).argmax(axis=1)
    return metrics_from_confusion(confusion_matrix(labels, pred, classes))


@dataclass
class TrainResult:
    best_state: dict
    best_epoch: int
    epochs_run: int
    history: list = field(default_factory=list)


def state_dict(model):
    return {name: p.data.copy() for name, p in model.named_parameters()}


def load_state(model, state):
    params = dict(model.named_parameters())
    missing = set(params) ^ set(state)
    if missing:
        raise ValueError(f"state/model parameter mismatch: {sorted(missing)}")
    for name, p in params.items():
        if p.data.shape != state[name].shape:
            raise ValueError(f"parameter {name!r}: shape {state[name].shape} != model {p.data.shape}")
        p.data[...] = state[name]


def train_loop(model, data, cfg, on_epoch=None):
    """Train ``model`` on ``data`` (a WindowedDataset) and restore its best-validation weights.

    History rows are dicts with ``epoch``, ``train_loss`` and ``val_acc``.
    """
    train, val = data.arrays("train"), data.arrays("val")
    if len(train[2]) == 0 or len(val[2]) == 0:
        raise ValueError("training needs nonempty train and validation splits")
    rng = np.random.default_rng(cfg.seed)
    opt = Adam(model.named_parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    amp, phase, labels = train
    n = len(labels)

    best_acc, best_epoch, best_state = -1.0, 0, state_dict(model)
    history = []
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        model.train()
        order = rng.permutation(n)
        total, seen = 0.0, 0
        for start in range(0, n, cfg.batch):
            idx = order[start : start + cfg.batch]
            model.zero_grad()
            loss = ad.cross_entropy(model(amp[idx], phase[idx]), labels[idx])
            value = float(loss.data)
            if not np.isfinite(value):
                raise TrainingError(
                    f"loss became {value} at epoch {epoch}, batch starting {start}: "
                    f"amp range [{amp[idx].min():.4g}, {amp[idx].max():.4g}], "
                    f"phase range [{phase[idx].min():.4g}, {phase[idx].max():.4g}]"
                )
            ad.backward(loss)
            opt.step()
            total += value * len(idx)
            seen += len(idx)
        val_acc = evaluate_metrics(model, *val).accuracy
        row = {"epoch": epoch, "train_loss": total / seen, "val_acc": val_acc}
        history.append(row)
        log.info("epoch %d loss %.5f val_acc %.4f", epoch, row["train_loss"], val_acc)
        if on_epoch is not None:
            on_epoch(row)
        if val_acc > best_acc:
            best_acc, best_epoch, best_state = val_acc, epoch, state_dict(model)
        elif epoch - best_epoch >= cfg.patience:
            break
    load_state(model, best_state)
    model.eval()
    return TrainResult(best_state=best_state, best_epoch=best_epoch, epochs_run=epoch, history=history)


def write_history(path, history):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "val_acc"])
        for row in history:
            writer.writerow([row["epoch"], repr(float(row["train_loss"])), repr(float(row["val_acc"]))])


def format_table(rows):
    """Plain-text results table (accuracy, F1, precision, recall); ``rows`` maps model name to MetricsReport."""
    header = f"{'Model':<12}| {'Accuracy':>9} | {'F1':>9} | {'Precision':>9} | {'Recall':>9}"
    lines = [header, "-" * len(header)]
    for name, m in rows.items():
        cells = [m.accuracy, m.macro_f1, m.macro_precision, m.macro_recall]
        lines.append(f"{name:<12}| " + " | ".join(f"{100 * c:8.2f}%" for c in cells))
    return "\n".join(lines) + "\n"
