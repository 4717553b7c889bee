"""Pixel-pooled OOD detection metrics: AUROC, AUPR (average precision),
FPR@95TPR and best-F1. OOD is the positive class; the pipeline's score
maps are higher-for-ID, so the anomaly score is their negation. Pixels
masked 255 are excluded.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, asdict
from typing import Sequence

import numpy as np
from scipy.stats import rankdata


@dataclass(frozen=True)
class EvalReport:
    auroc: float
    aupr: float
    fpr_at_95tpr: float
    best_f1: float
    n_ood: int
    n_id: int
    n_ignored: int
    note: str = "best_f1 is pixel-level (not the SMIYC component-level F1)"

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def sweep_thresholds(anomaly_scores: np.ndarray, labels: np.ndarray):
    """Confusion counts per distinct score, thresholds descending.

    Returns (thresholds, tp, fp, fn, tn) arrays; entry i counts a
    prediction of positive wherever score >= thresholds[i].
    """
    a = np.asarray(anomaly_scores, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=bool).ravel()
    if a.size == 0:
        raise ValueError("empty input")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("need both classes present")
    order = np.argsort(-a, kind="stable")
    a_sorted = a[order]
    y_sorted = y[order]
    # last index of each run of equal scores
    distinct = np.r_[np.flatnonzero(np.diff(a_sorted)), a_sorted.size - 1]
    tp = np.cumsum(y_sorted)[distinct]
    fp = (distinct + 1) - tp
    return a_sorted[distinct], tp, fp, n_pos - tp, n_neg - fp


def _auroc_rank(anomaly_scores: np.ndarray, labels: np.ndarray) -> float:
    """Mann-Whitney U with average ranks for ties."""
    a = np.asarray(anomaly_scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    ranks = rankdata(a, method="average")
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def evaluate(score_maps: Sequence[np.ndarray], gt_masks: Sequence[np.ndarray]) -> EvalReport:
    """Pool all pixels across the dataset and compute the four metrics.

    score_maps are higher-for-ID; gt_masks use {0 = ID, 1 = OOD, 255 = ignore}.
    """
    if len(score_maps) != len(gt_masks):
        raise ValueError("score/mask list length mismatch")
    scores, labels, ignored = [], [], 0
    for s, m in zip(score_maps, gt_masks):
        if s.shape != m.shape:
            raise ValueError(f"shape mismatch {s.shape} vs {m.shape}")
        bad = ~np.isin(m, (0, 1, 255))
        if np.any(bad):
            raise ValueError("mask values must be in {0, 1, 255}")
        keep = m != 255
        ignored += int((~keep).sum())
        scores.append(s[keep])
        labels.append(m[keep] == 1)
    a = -np.concatenate(scores).astype(np.float64)  # anomaly score
    y = np.concatenate(labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0:
        raise ValueError("no OOD pixels in the ground truth")
    if n_neg == 0:
        raise ValueError("no ID pixels in the ground truth")

    _, tp, fp, fn, tn = sweep_thresholds(a, y)
    precision = tp / (tp + fp)
    recall = tp / n_pos
    fpr = fp / n_neg
    # average precision: sum over recall increments
    prev_r = np.r_[0.0, recall[:-1]]
    aupr = float(np.sum((recall - prev_r) * precision))
    hit = np.flatnonzero(recall >= 0.95)
    fpr95 = float(fpr[hit[0]]) if hit.size else 1.0
    f1 = 2 * precision * recall / np.maximum(precision + recall, 1e-300)
    return EvalReport(
        auroc=_auroc_rank(a, y),
        aupr=aupr,
        fpr_at_95tpr=fpr95,
        best_f1=float(f1.max()),
        n_ood=n_pos,
        n_id=n_neg,
        n_ignored=ignored,
    )
