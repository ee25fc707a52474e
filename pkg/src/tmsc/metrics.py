"""Accuracy, macro-F1, Cohen's kappa and Matthews correlation from a confusion matrix."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class MetricsReport:
    acc: float
    macro_f1: float
    kappa: float
    mcc: float
    per_class_f1: tuple

    def line(self) -> str:
        """One-line tab-separated record."""
        return "\t".join(f"{k}={v:.6f}" for k, v in
                         (("acc", self.acc), ("macro_f1", self.macro_f1), ("kappa", self.kappa), ("mcc", self.mcc)))

    def block(self) -> str:
        rows = [
            f"ACC      {100 * self.acc:6.2f}%",
            f"macro-F1 {100 * self.macro_f1:6.2f}%",
            f"Kappa    {100 * self.kappa:6.2f}%",
            f"MCC      {100 * self.mcc:6.2f}%",
            "per-class F1: " + " ".join(f"{f:.4f}" for f in self.per_class_f1),
        ]
        return "\n".join(rows)


def confusion_matrix(labels, predictions, k: int) -> np.ndarray:
    cm = np.zeros((k, k), dtype=np.int64)
    for t, p in zip(labels, predictions):
        cm[int(t), int(p)] += 1
    return cm


def compute_metrics(cm) -> MetricsReport:
    cm = np.asarray(cm)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or cm.shape[0] == 0:
        raise ValueError(f"confusion matrix must be square and non-empty, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion matrix has negative counts")
    counts = cm.astype(np.int64)
    n = int(counts.sum())
    if n == 0:
        raise ValueError("confusion matrix is empty")
    diag = np.diag(counts)
    true_tot = counts.sum(axis=1)
    pred_tot = counts.sum(axis=0)
    correct = int(diag.sum())

    f1 = []
    for tp, t_k, p_k in zip(diag, true_tot, pred_tot):
        # 2PR/(P+R) == 2TP/(t_k + p_k)
        f1.append(2.0 * tp / (t_k + p_k) if tp > 0 else 0.0)

    p_o = correct / n
    p_e = float(np.dot(true_tot, pred_tot)) / (n * n)
    kappa = (p_o - p_e) / (1.0 - p_e) if p_e != 1.0 else 0.0

    # multiclass MCC, covariance form (exact integer numerator and factors)
    cov_tp = correct * n - int(np.dot(true_tot, pred_tot))
    cov_pp = n * n - int(np.dot(pred_tot, pred_tot))
    cov_tt = n * n - int(np.dot(true_tot, true_tot))
    mcc = cov_tp / math.sqrt(cov_pp * cov_tt) if cov_pp and cov_tt else 0.0

    return MetricsReport(correct / n, float(np.mean(f1)), float(kappa), float(mcc), tuple(float(f) for f in f1))
