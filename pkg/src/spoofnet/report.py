"""Figures written next to the delimited CLI output."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_training_curves(log, path):
    """Loss and dev EER per epoch, one line per seed, from a ``train_log.json`` payload."""
    fig, (ax_loss, ax_eer) = plt.subplots(1, 2, figsize=(9, 3.5))
    for run in log["runs"]:
        epochs = [e["epoch"] for e in run["epochs"]]
        ax_loss.plot(epochs, [e["loss"] for e in run["epochs"]], label=f"seed {run['seed']}")
        dev = [(e["epoch"], 100 * e["dev_eer"]) for e in run["epochs"] if e["dev_eer"] is not None]
        if dev:
            ax_eer.plot(*zip(*dev), marker="o", ms=3, label=f"seed {run['seed']}")
    ax_loss.set_xlabel("epoch")
    ax_loss.set_ylabel("weighted CE")
    ax_loss.set_yscale("log")
    ax_eer.set_xlabel("epoch")
    ax_eer.set_ylabel("dev EER (%)")
    ax_loss.legend(fontsize=8)
    fig.suptitle(log.get("label", ""), fontsize=9)
    return _save(fig, path)


def plot_significance(matrix, path, names=("A", "B")):
    """Heatmap of pairwise p-values; significant cells are outlined."""
    p = matrix.p_values
    fig, ax = plt.subplots(figsize=(1.2 * p.shape[1] + 2, 1.0 * p.shape[0] + 1.5))
    im = ax.imshow(np.log10(np.clip(p, 1e-12, 1)), cmap="viridis_r", vmin=-6, vmax=0)
    for i in range(p.shape[0]):
        for j in range(p.shape[1]):
            ax.text(j, i, f"{p[i, j]:.2g}", ha="center", va="center", fontsize=8,
                    color="white" if p[i, j] < 1e-3 else "black")
            if matrix.significant[i, j]:
                ax.add_patch(plt.Rectangle((j - 0.5, i - 0.5), 1, 1, fill=False, lw=2, ec="red"))
    ax.set_xticks(range(p.shape[1]), [f"{names[1]}{j + 1}" for j in range(p.shape[1])])
    ax.set_yticks(range(p.shape[0]), [f"{names[0]}{i + 1}" for i in range(p.shape[0])])
    fig.colorbar(im, ax=ax, label="log10 p")
    ax.set_title(f"Holm-corrected, alpha = {matrix.alpha}", fontsize=9)
    return _save(fig, path)


def plot_matrix_summary(table, path):
    """Best and average EER per experiment row."""
    labels = [r.label for r in table.rows]
    x = np.arange(len(labels))
    fig, ax = plt.subplots(figsize=(max(4, 1.4 * len(labels) + 1), 3.8))
    ax.bar(x - 0.2, [100 * r.best_eer for r in table.rows], 0.4, label="best")
    ax.bar(x + 0.2, [100 * r.average_eer for r in table.rows], 0.4, label="average")
    ax.set_xticks(x, labels, rotation=25, ha="right", fontsize=8)
    ax.set_ylabel("EER (%)")
    ax.legend(fontsize=8)
    return _save(fig, path)


def plot_breakdown(breakdown, path):
    """Per-condition EER bars with the pooled EER as a reference line."""
    names = [k for k in breakdown if k != "pooled"]
    fig, ax = plt.subplots(figsize=(max(4, 0.6 * len(names) + 2), 3.5))
    ax.bar(names, [100 * breakdown[k].eer for k in names], color="tab:blue")
    ax.axhline(100 * breakdown["pooled"].eer, color="tab:red", ls="--", label="pooled")
    ax.set_ylabel("EER (%)")
    ax.legend(fontsize=8)
    return _save(fig, path)
