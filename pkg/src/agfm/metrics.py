"""Ranking metrics: AUROC (tie-aware, Mann-Whitney) and average precision.

AUROC gives half credit to ties; AUPRC is the uninterpolated step integral
with tied scores collapsed into a single threshold group. Both run in
O(N log N) and are exact, not trapezoid approximations.
"""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class EvalResult:
    auroc: float
    auprc: float
    n_pos: int
    n_neg: int


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores and labels differ in length: "
                         f"{scores.shape} vs {labels.shape}")
    n_pos = int((labels == 1).sum())
    n_neg = int((labels == 0).sum())
    if n_pos + n_neg != len(labels):
        raise ValueError("labels must be 0 or 1")
    if n_pos == 0 or n_neg == 0:
        raise ValueError("both classes must be present")
    return scores, labels == 1, n_pos, n_neg


def auroc(scores, labels) -> float:
    """P(random positive outranks random negative), ties counted half."""
    scores, pos, n_pos, n_neg = _check_binary(scores, labels)
    order = np.argsort(scores, kind="mergesort")
    sorted_scores = scores[order]
    # average rank (1-based) within each tied group
    boundaries = np.flatnonzero(np.diff(sorted_scores)) + 1
    starts = np.concatenate([[0], boundaries])
    ends = np.concatenate([boundaries, [len(scores)]])
    ranks = np.empty(len(scores))
    ranks[order] = np.repeat((starts + ends + 1) / 2.0, ends - starts)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auprc(scores, labels) -> float:
    """Average precision over descending-score thresholds, tie groups merged."""
    scores, pos, n_pos, _ = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    y = pos[order]
    boundaries = np.flatnonzero(np.diff(scores[order])) + 1
    group_ends = np.concatenate([boundaries, [len(scores)]])
    tp = np.cumsum(y)[group_ends - 1].astype(np.float64)
    precision = tp / group_ends
    recall = tp / n_pos
    prev_recall = np.concatenate([[0.0], recall[:-1]])
    return float(((recall - prev_recall) * precision).sum())


def evaluate(scores, labels) -> EvalResult:
    """Both metrics plus class counts, for reporting."""
    _, pos, n_pos, n_neg = _check_binary(scores, labels)
    return EvalResult(auroc=auroc(scores, labels), auprc=auprc(scores, labels),
                      n_pos=n_pos, n_neg=n_neg)
