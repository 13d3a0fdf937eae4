"""Report figures: amplitude heatmaps, training curves, confusion matrices."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "legend.fontsize": 8,
    "figure.dpi": 120,
    "savefig.bbox": "tight",
    "image.cmap": "viridis",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_heatmap(grid, times, subcarrier_indices, path, title="CSI amplitude"):
    """Subcarrier-by-time amplitude image, time on the x axis."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        extent = [times[0], times[-1], 0, len(subcarrier_indices)]
        im = ax.imshow(np.asarray(grid).T, aspect="auto", origin="lower", extent=extent)
        ticks = np.linspace(0, len(subcarrier_indices) - 1, 5).astype(int)
        ax.set_yticks(ticks + 0.5)
        ax.set_yticklabels([str(subcarrier_indices[i]) for i in ticks])
        ax.set_xlabel("time [s]")
        ax.set_ylabel("subcarrier")
        ax.set_title(title)
        fig.colorbar(im, ax=ax, label="amplitude")
        return _save(fig, path)


def plot_history(history, path):
    epochs = [row["epoch"] for row in history]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(5.0, 3.0))
        ax.plot(epochs, [row["train_loss"] for row in history], "o-", ms=3, label="train loss")
        ax.set_xlabel("epoch")
        ax.set_ylabel("cross-entropy")
        ax2 = ax.twinx()
        ax2.plot(epochs, [row["val_acc"] for row in history], "s--", ms=3, color="C1", label="val accuracy")
        ax2.set_ylabel("validation accuracy")
        ax2.set_ylim(0, 1.02)
        lines = ax.get_lines() + ax2.get_lines()
        ax.legend(lines, [ln.get_label() for ln in lines], loc="center right")
        return _save(fig, path)


def plot_confusion(cm, path, title="Test confusion matrix"):
    cm = np.asarray(cm)
    n = cm.shape[0]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(0.5 * n + 2.0, 0.5 * n + 1.6))
        ax.imshow(cm, cmap="Blues")
        for i in range(n):
            for j in range(n):
                color = "white" if cm[i, j] > cm.max() / 2 else "black"
                ax.text(j, i, str(cm[i, j]), ha="center", va="center", color=color, fontsize=7)
        ax.set_xticks(range(n))
        ax.set_yticks(range(n))
        ax.set_xlabel("predicted")
        ax.set_ylabel("true")
        ax.set_title(title)
        return _save(fig, path)
