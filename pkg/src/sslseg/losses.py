"""Segmentation losses with analytic gradients with respect to logits.

The workhorse is a weighted symmetric cross-entropy over per-pixel class
probabilities and hard labels:

    loss = mean over effective pixels of w * (alpha * l_fwd + beta * l_rev)

where l_fwd = -log p_label is ordinary cross-entropy and l_rev is the
reversed direction with log 0 clamped to a finite constant A < 0, which
for a hard label collapses to -A * (1 - p_label). Effective pixels are
those with w > 0 and a real label. The gradient with respect to logits
is closed-form:

    (softmax - onehot) * w * (alpha - beta * A * p_label) / count

Plain cross-entropy is the alpha=1, beta=0, w=1 special case and shares
the code path, so scaled variants agree bit for bit.
"""

from dataclasses import dataclass

import numpy as np

from .data import IGNORE


@dataclass
class SceConfig:
    alpha: float = 2.0  # forward cross-entropy coefficient
    beta: float = 1.0  # reverse cross-entropy coefficient
    clamp: float = -4.0  # finite stand-in for log 0 in the reverse term

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be non-negative, got {self.beta}")
        if self.clamp >= 0.0:
            raise ValueError(f"log-zero clamp must be negative, got {self.clamp}")


def _validate(probs, labels):
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if probs.ndim != 3:
        raise ValueError(f"expected probabilities of shape (K, H, W), got {probs.shape}")
    if labels.shape != probs.shape[1:]:
        raise ValueError(f"label shape {labels.shape} does not match probs {probs.shape}")
    if not np.isfinite(probs).all():
        raise ValueError("probabilities contain non-finite values")
    bad = labels[(labels != IGNORE) & (labels >= probs.shape[0])]
    if bad.size:
        raise ValueError(f"label {bad.flat[0]} out of range for {probs.shape[0]} classes")
    return probs, labels


def weighted_sce(probs, labels, weights, config):
    """Weighted symmetric cross-entropy; returns (loss, grad wrt logits).

    Pixels with weight 0 or the ignore label contribute nothing to either
    the loss or the gradient; the mean is over the remaining pixel count.
    Weights are treated as constants (no gradient flows through them).
    """
    probs, labels = _validate(probs, labels)
    weights = np.asarray(weights)
    if weights.shape != labels.shape:
        raise ValueError(f"weight shape {weights.shape} does not match labels {labels.shape}")
    if (weights < 0).any():
        raise ValueError("weights must be non-negative")

    effective = (weights > 0) & (labels != IGNORE)
    count = int(effective.sum())
    if count == 0:
        return 0.0, np.zeros_like(probs)

    idx = np.where(labels == IGNORE, 0, labels).astype(np.intp)
    p_label = np.take_along_axis(probs, idx[None], axis=0)[0]
    fwd = -np.log(np.clip(p_label, 1e-12, None))
    rev = -config.clamp * (1.0 - p_label)
    w64 = weights.astype(np.float64)
    fwd_mean = float((w64 * fwd)[effective].sum(dtype=np.float64)) / count
    rev_mean = float((w64 * rev)[effective].sum(dtype=np.float64)) / count
    loss = config.alpha * fwd_mean + config.beta * rev_mean

    coeff = weights * (config.alpha - config.beta * config.clamp * p_label) / count
    coeff = np.where(effective, coeff, 0.0).astype(probs.dtype, copy=False)
    grad = probs * coeff[None]
    rows, cols = np.nonzero(effective)
    grad[idx[rows, cols], rows, cols] -= coeff[rows, cols]
    return loss, grad


def cross_entropy(probs, labels):
    """Mean cross-entropy over non-ignored pixels; returns (loss, grad wrt logits)."""
    probs = np.asarray(probs)
    ones = np.ones(np.asarray(labels).shape, dtype=probs.dtype)
    return weighted_sce(probs, labels, ones, SceConfig(alpha=1.0, beta=0.0, clamp=-1.0))


def pseudolabel_weights(probs, labels, valid):
    """Per-pixel weights: the model's own probability at each pseudo-label.

    Probabilities come from the clean (unperturbed) image; invalid or
    ignored pixels get weight 0. The result is data, not a differentiable
    quantity.
    """
    probs, labels = _validate(probs, labels)
    valid = np.asarray(valid)
    if valid.shape != labels.shape:
        raise ValueError(f"valid shape {valid.shape} does not match labels {labels.shape}")
    idx = np.where(labels == IGNORE, 0, labels).astype(np.intp)
    p_label = np.take_along_axis(probs, idx[None], axis=0)[0]
    keep = valid & (labels != IGNORE)
    return np.where(keep, p_label, 0.0).astype(probs.dtype, copy=False)
