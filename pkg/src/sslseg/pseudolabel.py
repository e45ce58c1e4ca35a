"""Pseudo-label generation, confidence-based filtering, and audit splits.

A pseudo-label record is the frozen teacher's argmax label map, the
probability behind each argmax (confidence), and a validity mask.
Filtering never rewrites labels or confidences; it only clears validity
for pixels whose confidence falls below a class-wise threshold read off
a confidence histogram, so the removed fraction is controlled per class
rather than globally.

The decile and boundary-distance splits slice the same records for
analysis: deciles rank each class's pixels by confidence, the boundary
split separates pixels within chessboard distance d of a different
class from the interior.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .data import IGNORE
from .net import forward
from .tensor import argmax_channel, softmax_channel

N_BINS = 100


@dataclass
class PseudoLabelRecord:
    labels: np.ndarray  # (H, W) uint8 argmax classes
    confidence: np.ndarray  # (H, W) float32 probability at the argmax
    valid: np.ndarray  # (H, W) bool, cleared by filtering


@dataclass
class ClassHistogram:
    class_id: int
    edges: np.ndarray  # (B + 1,) bin edges over [0, 1]
    counts: np.ndarray  # (B,) pixel counts; last bin right-closed


def ensemble_probs(model, image, n_views=1):
    """Average softmax over deterministic views (identity, h-flip, repeating)."""
    if n_views < 1:
        raise ValueError(f"need at least one view, got {n_views}")
    total = None
    for view in range(n_views):
        flipped = view % 2 == 1
        x = image[:, ::-1, :] if flipped else image
        probs = softmax_channel(forward(model, np.ascontiguousarray(x)))
        if flipped:
            probs = probs[:, :, ::-1]
        total = probs if total is None else total + probs
    return total / n_views


def generate_record(model, image, n_views=1):
    """Pseudo-labels for one unlabelled image; every pixel starts valid."""
    probs = ensemble_probs(model, image, n_views)
    labels = argmax_channel(probs)
    confidence = np.take_along_axis(probs, labels[None].astype(np.intp), axis=0)[0]
    return PseudoLabelRecord(
        labels=labels,
        confidence=confidence.astype(np.float32),
        valid=np.ones(labels.shape, dtype=bool),
    )


def class_histograms(records, n_classes, n_bins=N_BINS):
    """Confidence histogram per class over currently valid pixels."""
    if n_bins < 10:
        raise ValueError(f"need at least 10 bins, got {n_bins}")
    edges = np.linspace(0.0, 1.0, n_bins + 1)
    out = []
    for c in range(n_classes):
        counts = np.zeros(n_bins, dtype=np.int64)
        for rec in records:
            sel = rec.valid & (rec.labels == c)
            if sel.any():
                counts += np.histogram(rec.confidence[sel], bins=edges)[0]
        out.append(ClassHistogram(class_id=c, edges=edges, counts=counts))
    return out


def classwise_thresholds(histograms, q):
    """Per-class confidence cutoffs removing roughly the lowest fraction q.

    The cutoff is the right edge of the bin where the cumulative count
    first reaches q * total, so strict-less-than invalidation drops the
    bottom q of each class up to bin resolution. Classes with no pixels
    get cutoff 0 (a no-op).
    """
    if not 0.0 <= q <= 1.0:
        raise ValueError(f"removal fraction q must be in [0, 1], got {q}")
    thresholds = np.zeros(len(histograms))
    for i, hist in enumerate(histograms):
        target = q * hist.counts.sum()
        if target <= 0:
            continue
        cum = np.cumsum(hist.counts)
        bin_idx = int(np.searchsorted(cum, target, side="left"))
        thresholds[i] = hist.edges[bin_idx + 1]
    return thresholds


def filter_records(records, thresholds):
    """New records with validity cleared where confidence < the class cutoff.

    Labels and confidences pass through untouched; already-invalid pixels
    stay invalid.
    """
    thresholds = np.asarray(thresholds, dtype=np.float64)
    out = []
    for rec in records:
        cut = thresholds[np.minimum(rec.labels, len(thresholds) - 1).astype(np.intp)]
        keep = rec.valid & ~(rec.confidence < cut)
        out.append(
            PseudoLabelRecord(labels=rec.labels, confidence=rec.confidence, valid=keep)
        )
    return out


def decile_split(records, n_classes):
    """Class-wise confidence deciles; returns one (H, W) int8 map per record.

    Each valid pixel gets the decile index (0 = least confident tenth of
    its class, 9 = most confident) of its confidence within its class,
    pooled across all records. Invalid pixels get -1. Ties keep record
    order, then row-major pixel order.
    """
    maps = [np.full(rec.labels.shape, -1, dtype=np.int8) for rec in records]
    for c in range(n_classes):
        conf, where = [], []
        for ridx, rec in enumerate(records):
            sel = rec.valid & (rec.labels == c)
            rows, cols = np.nonzero(sel)
            conf.append(rec.confidence[rows, cols])
            where.append((np.full(rows.shape, ridx), rows, cols))
        conf = np.concatenate(conf) if conf else np.empty(0)
        n = conf.size
        if n == 0:
            continue
        ridx = np.concatenate([w[0] for w in where])
        rows = np.concatenate([w[1] for w in where])
        cols = np.concatenate([w[2] for w in where])
        order = np.argsort(conf, kind="stable")
        bounds = [i * n // 10 for i in range(11)]
        for d in range(10):
            for j in order[bounds[d] : bounds[d + 1]]:
                maps[ridx[j]][rows[j], cols[j]] = d
    return maps


def decile_summary(records, maps, truths, n_classes):
    """(class, decile, pixel_count, precision, mean_confidence) rows.

    `maps` come from decile_split; precision is judged against `truths`
    and reported as nan when no ground truth is available (truths None)
    or a slice is empty.
    """
    if truths is None:
        truths = [None] * len(records)
    rows = []
    for c in range(n_classes):
        for d in range(10):
            count, scored, hits, conf_sum = 0, 0, 0, 0.0
            for rec, dmap, truth in zip(records, maps, truths):
                sel = (rec.labels == c) & (dmap == d)
                count += int(sel.sum())
                conf_sum += float(rec.confidence[sel].sum(dtype=np.float64))
                if truth is not None:
                    judged = sel & (truth != IGNORE)
                    scored += int(judged.sum())
                    hits += int((truth[judged] == c).sum())
            precision = hits / scored if scored else float("nan")
            mean_conf = conf_sum / count if count else float("nan")
            rows.append((c, d, count, precision, mean_conf))
    return rows


def _dilate8(mask):
    padded = np.pad(mask, 1)
    out = np.zeros_like(mask)
    for dy in (0, 1, 2):
        for dx in (0, 1, 2):
            out |= padded[dy : dy + mask.shape[0], dx : dx + mask.shape[1]]
    return out


def boundary_distance_split(labels, d):
    """(near, far) masks: near pixels lie within chessboard distance d of a
    pixel of a different real class. A single-class map is entirely far."""
    if d < 0:
        raise ValueError(f"distance must be non-negative, got {d}")
    labels = np.asarray(labels)
    real = labels != IGNORE
    near = np.zeros(labels.shape, dtype=bool)
    for c in np.unique(labels[real]):
        other = real & (labels != c)
        reach = other.copy()
        for _ in range(d):
            reach = _dilate8(reach)
        near |= reach & (labels == c)
    return near, real & ~near


def boundary_confidence(records, distance):
    """Confidence near class boundaries versus in region interiors.

    Boundaries are those of each record's own pseudo-label map. Returns
    (rows, (near_mean, far_mean)): per-class rows of
    (class, near_count, far_count, near_mean, far_mean) over valid
    pixels, and the pooled means over all classes; empty sides are nan.
    """
    sums = {}
    for rec in records:
        near, far = boundary_distance_split(rec.labels, distance)
        near &= rec.valid
        far &= rec.valid
        for c in np.unique(rec.labels[rec.valid]):
            cls = rec.labels == c
            entry = sums.setdefault(int(c), [0, 0, 0.0, 0.0])
            entry[0] += int((near & cls).sum())
            entry[1] += int((far & cls).sum())
            entry[2] += float(rec.confidence[near & cls].sum(dtype=np.float64))
            entry[3] += float(rec.confidence[far & cls].sum(dtype=np.float64))
    rows = []
    total = [0, 0, 0.0, 0.0]
    for c in sorted(sums):
        n_near, n_far, s_near, s_far = sums[c]
        rows.append(
            (
                c,
                n_near,
                n_far,
                s_near / n_near if n_near else float("nan"),
                s_far / n_far if n_far else float("nan"),
            )
        )
        for i, v in enumerate(sums[c]):
            total[i] += v
    pooled = (
        total[2] / total[0] if total[0] else float("nan"),
        total[3] / total[1] if total[1] else float("nan"),
    )
    return rows, pooled


def write_boundary_csv(path, rows):
    """One row per class: class,near_count,far_count,near_mean_confidence,far_mean_confidence."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["class", "near_count", "far_count", "near_mean_confidence", "far_mean_confidence"]
        )
        for klass, n_near, n_far, m_near, m_far in rows:
            writer.writerow([klass, n_near, n_far, f"{m_near:.6f}", f"{m_far:.6f}"])


def class_precision(records, truths):
    """Fraction of valid pseudo-labelled pixels per class that match the
    ground truth; classes with no valid pixels are absent from the dict."""
    hits = {}
    totals = {}
    for rec, truth in zip(records, truths):
        scored = rec.valid & (truth != IGNORE)
        for c in np.unique(rec.labels[scored]):
            sel = scored & (rec.labels == c)
            hits[c] = hits.get(c, 0) + int((truth[sel] == c).sum())
            totals[c] = totals.get(c, 0) + int(sel.sum())
    return {int(c): hits[c] / totals[c] for c in totals}


def write_histogram_csv(path, histograms):
    """One row per (class, bin): class,bin_lo,bin_hi,count."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "bin_lo", "bin_hi", "count"])
        for hist in histograms:
            for b in range(hist.counts.size):
                writer.writerow(
                    [
                        hist.class_id,
                        f"{hist.edges[b]:.6f}",
                        f"{hist.edges[b + 1]:.6f}",
                        int(hist.counts[b]),
                    ]
                )


def write_decile_csv(path, rows):
    """One row per (class, decile): class,decile,pixel_count,precision,mean_confidence."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["class", "decile", "pixel_count", "precision", "mean_confidence"])
        for klass, decile, count, prec, conf in rows:
            writer.writerow([klass, decile, count, f"{prec:.6f}", f"{conf:.6f}"])
