"""Confusion-matrix construction and classification metrics."""

from __future__ import annotations

import json

import numpy as np


def confusion(preds: np.ndarray, labels: np.ndarray, num_classes: int) -> np.ndarray:
    """C x C count matrix; rows are true classes, columns predicted classes."""
    preds = np.asarray(preds)
    labels = np.asarray(labels)
    if preds.shape != labels.shape:
        raise ValueError("preds and labels must have the same length")
    if len(preds) and (preds.max() >= num_classes or labels.max() >= num_classes
                       or preds.min() < 0 or labels.min() < 0):
        raise ValueError("class index out of range")
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(cm, (labels, preds), 1)
    return cm


def accuracy(cm: np.ndarray) -> float:
    total = cm.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(cm) / total)


def _per_class(cm: np.ndarray):
    tp = np.diag(cm).astype(np.float64)
    fp = cm.sum(axis=0) - tp
    fn = cm.sum(axis=1) - tp
    tn = cm.sum() - tp - fp - fn
    return tp, fp, fn, tn


def macro_f1(cm: np.ndarray) -> float:
    """Mean per-class F1. Classes with no support and no predictions are excluded."""
    tp, fp, fn, _ = _per_class(cm)
    denom = 2 * tp + fp + fn
    included = denom > 0
    if not included.any():
        raise ValueError("no class has support or predictions")
    return float((2 * tp[included] / denom[included]).mean())


def tpr(cm: np.ndarray) -> float:
    """Macro-averaged recall over classes with support."""
    tp, _, fn, _ = _per_class(cm)
    support = tp + fn > 0
    if not support.any():
        raise ValueError("no class has support")
    return float((tp[support] / (tp + fn)[support]).mean())


def fpr(cm: np.ndarray) -> float:
    """Macro-averaged false positive rate FP / (FP + TN)."""
    tp, fp, _, tn = _per_class(cm)
    denom = fp + tn
    valid = denom > 0
    if not valid.any():
        raise ValueError("FPR undefined for this matrix")
    return float((fp[valid] / denom[valid]).mean())


def per_class_precision(cm: np.ndarray) -> np.ndarray:
    """Precision per class; NaN where the class is never predicted."""
    tp, fp, _, _ = _per_class(cm)
    denom = tp + fp
    with np.errstate(invalid="ignore"):
        return np.where(denom > 0, tp / np.maximum(denom, 1), np.nan)


def metrics_report(cm: np.ndarray, class_vocab: list[str] | None = None) -> dict:
    """All headline metrics as percentages, rounded to two decimals."""
    report = {
        "accuracy": round(100 * accuracy(cm), 2),
        "macro_f1": round(100 * macro_f1(cm), 2),
        "tpr": round(100 * tpr(cm), 2),
        "fpr": round(100 * fpr(cm), 2),
    }
    if class_vocab is not None:
        prec = per_class_precision(cm)
        for name, p in zip(class_vocab, prec):
            report[f"precision[{name}]"] = round(100 * p, 2) if np.isfinite(p) else None
    return report


def write_report(report: dict, text_path=None, json_path=None) -> None:
    if text_path is not None:
        with open(text_path, "w", encoding="utf-8") as fh:
            for k, v in report.items():
                fh.write(f"{k}={v}\n")
    if json_path is not None:
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)
            fh.write("\n")
