"""Confusion-matrix accumulation, IoU summaries, and the run CSV logs.

mIoU averages per-class intersection-over-union over the classes that
actually occur in the ground truth; classes the truth never shows are
excluded rather than counted as zero. CSV writers use fixed columns and
fixed float formatting so identical runs produce identical bytes.
"""

import csv

import numpy as np

from .data import IGNORE
from .net import forward
from .tensor import argmax_channel, softmax_channel

METRICS_COLUMNS = [
    "round",
    "step",
    "lr",
    "loss_sup",
    "loss_unsup",
    "miou_eval",
    "mean_w_correct",
    "mean_w_wrong",
]


def new_confusion(n_classes):
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    return np.zeros((n_classes, n_classes), dtype=np.int64)


def accumulate(confusion, truth, pred):
    """Add one image's (truth, prediction) pair; ignored truth pixels are skipped."""
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape:
        raise ValueError(f"truth shape {truth.shape} != prediction shape {pred.shape}")
    k = confusion.shape[0]
    keep = truth != IGNORE
    t = truth[keep].astype(np.int64)
    p = pred[keep].astype(np.int64)
    if t.size and (t.max() >= k or p.max() >= k or p.min() < 0):
        raise ValueError(f"labels outside [0, {k}) in confusion update")
    confusion += np.bincount(k * t + p, minlength=k * k).reshape(k, k)


def per_class_iou(confusion):
    """(iou, present): IoU per class and whether the class occurs in the truth."""
    diag = np.diag(confusion).astype(np.float64)
    rows = confusion.sum(axis=1).astype(np.float64)
    cols = confusion.sum(axis=0).astype(np.float64)
    present = rows > 0
    union = rows + cols - diag
    iou = np.full(confusion.shape[0], np.nan)
    np.divide(diag, union, out=iou, where=union > 0)
    return iou, present


def miou(confusion):
    """Mean IoU over classes present in the ground truth."""
    iou, present = per_class_iou(confusion)
    if not present.any():
        raise ValueError("confusion matrix has no ground-truth pixels")
    return float(iou[present].mean())


def evaluate(model, pairs, n_classes):
    """mIoU of a model over (image, mask) pairs."""
    if not pairs:
        raise ValueError("nothing to evaluate")
    confusion = new_confusion(n_classes)
    for image, mask in pairs:
        pred = argmax_channel(softmax_channel(forward(model, image)))
        accumulate(confusion, mask, pred)
    return miou(confusion)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{float(value):.6f}"


def write_metrics_csv(path, rows):
    """Training log with the fixed column set; missing fields stay blank."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow([_fmt(row.get(col)) for col in METRICS_COLUMNS])


def write_eval_csv(path, confusion):
    """Per-class IoU plus a final mean row (classes absent from the truth
    print as nan and are excluded from the mean)."""
    iou, present = per_class_iou(confusion)
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "iou"])
        for c in range(confusion.shape[0]):
            writer.writerow([c, f"{iou[c]:.6f}" if present[c] else "nan"])
        writer.writerow(["mean", f"{float(iou[present].mean()):.6f}"])
