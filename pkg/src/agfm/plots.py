"""Figure rendering for the report paths (training curves, ranking curves).

matplotlib is imported lazily with the Agg backend so the core library never
needs a display; PNG metadata is pinned to keep re-renders byte-identical.
"""

from pathlib import Path

import numpy as np

_SAVE_KWARGS = {"dpi": 120, "metadata": {"Software": "agfm"}}


def _pyplot():
    import matplotlib
    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt
    return plt


def save_training_curves(report, path: str | Path) -> None:
    """Loss-vs-epoch curves for a TrainReport."""
    plt = _pyplot()
    epochs = np.arange(1, len(report.total) + 1)
    fig, ax = plt.subplots(figsize=(6.0, 3.6))
    ax.plot(epochs, report.bce, label="classification", lw=1.2)
    ax.plot(epochs, report.align, label="prototype alignment", lw=1.2)
    ax.plot(epochs, report.total, label="total", lw=1.6, color="k")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss (sum over nodes)")
    ax.set_yscale("log")
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)


def save_ranking_curves(scores, labels, path: str | Path) -> None:
    """ROC and precision-recall panels for a scored, labeled node set."""
    plt = _pyplot()
    scores = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels).astype(bool)
    order = np.argsort(-scores, kind="mergesort")
    ys = y[order]
    tp = np.cumsum(ys)
    fp = np.cumsum(~ys)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    tpr = np.concatenate([[0.0], tp / max(n_pos, 1)])
    fpr = np.concatenate([[0.0], fp / max(n_neg, 1)])
    precision = tp / np.arange(1, len(ys) + 1)
    recall = tp / max(n_pos, 1)

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.4))
    ax1.plot(fpr, tpr, lw=1.4)
    ax1.plot([0, 1], [0, 1], ls="--", lw=0.8, color="gray")
    ax1.set_xlabel("false positive rate")
    ax1.set_ylabel("true positive rate")
    ax1.set_title("ROC")
    ax2.plot(recall, precision, lw=1.4)
    ax2.axhline(n_pos / max(len(y), 1), ls="--", lw=0.8, color="gray")
    ax2.set_xlabel("recall")
    ax2.set_ylabel("precision")
    ax2.set_ylim(0.0, 1.02)
    ax2.set_title("precision-recall")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_KWARGS)
    plt.close(fig)
