"""Irregular binary mixing masks and the pixelwise mix they drive.

A cow mask thresholds Gaussian-smoothed white noise at the empirical
p-quantile, so each mask covers (almost exactly) fraction p with blobby,
scale-sigma regions. A cut mask is the rectangular baseline. Mixing is
pure per-pixel selection between two sources, applied identically to
images, label maps, and weight maps.
"""

from dataclasses import dataclass

import numpy as np

from .netpbm import write_pgm
from .tensor import gaussian_filter


@dataclass
class MixMask:
    mask: np.ndarray  # (H, W) uint8 in {0, 1}; 1 selects source 1
    sigma: float  # smoothing scale in pixels (0 for rectangular masks)
    p: float  # requested fraction of ones


def generate_cowmask(seed, height, width, sigma, p):
    """Threshold smoothed noise so that fraction p of pixels land on 1.

    The threshold is the empirical p-quantile of the smoothed field, so
    individual masks hit p up to quantization (one pixel in H*W), not
    just in expectation.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"mask fraction p must be in (0, 1), got {p}")
    if sigma <= 0.0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal((height, width))
    smooth = gaussian_filter(noise, sigma)
    tau = np.quantile(smooth, p)
    return MixMask(mask=(smooth <= tau).astype(np.uint8), sigma=float(sigma), p=float(p))


def generate_cutmix_mask(seed, height, width, p):
    """Rectangular baseline: one axis-aligned box of zeros cut out of a field
    of ones, covering ~(1-p) of the area so the ones fraction is ~p.

    Side lengths are round(H*sqrt(1-p)) x round(W*sqrt(1-p)) and the box is
    placed uniformly among fully-inside positions.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"mask fraction p must be in (0, 1), got {p}")
    rng = np.random.default_rng(seed)
    hole = np.sqrt(1.0 - p)
    rh = min(max(int(round(height * hole)), 1), height)
    rw = min(max(int(round(width * hole)), 1), width)
    y0 = int(rng.integers(0, height - rh + 1))
    x0 = int(rng.integers(0, width - rw + 1))
    mask = np.ones((height, width), dtype=np.uint8)
    mask[y0 : y0 + rh, x0 : x0 + rw] = 0
    return MixMask(mask=mask, sigma=0.0, p=float(p))


def sample_mask_params(seed, height, width):
    """Random (sigma, p) for one mask: sigma log-uniform on [4, 16] at the
    48-pixel reference scale (rescaled by min(H, W)/48), p uniform on [0.3, 0.7]."""
    rng = np.random.default_rng(seed)
    sigma = float(np.exp(rng.uniform(np.log(4.0), np.log(16.0))))
    sigma *= min(height, width) / 48.0
    p = float(rng.uniform(0.3, 0.7))
    return sigma, p


def mask_fraction(mix_mask):
    """Fraction of pixels selecting source 1."""
    return float(mix_mask.mask.mean(dtype=np.float64))


def mix(image1, image2, labels1, labels2, weights1, weights2, mix_mask):
    """Per-pixel selection: mask 1 takes source 1, mask 0 takes source 2.

    Images are blended channelwise; label and weight maps follow the same
    selection so every mixed pixel keeps the label and weight of the
    source its appearance came from. Selection is exact (no arithmetic
    blending), so mask values outside {0, 1} are rejected.
    """
    m = mix_mask.mask
    if image1.shape != image2.shape:
        raise ValueError(f"image shapes differ: {image1.shape} vs {image2.shape}")
    if image1.shape[:2] != m.shape:
        raise ValueError(f"mask shape {m.shape} does not match images {image1.shape[:2]}")
    if labels1.shape != m.shape or labels2.shape != m.shape:
        raise ValueError("label maps must match the mask shape")
    if weights1.shape != m.shape or weights2.shape != m.shape:
        raise ValueError("weight maps must match the mask shape")
    if not np.isin(m, (0, 1)).all():
        raise ValueError("mix mask must be binary")
    sel = m.astype(bool)
    image = np.where(sel[:, :, None], image1, image2)
    labels = np.where(sel, labels1, labels2)
    weights = np.where(sel, weights1, weights2)
    return image, labels, weights


def save_mask(path, mix_mask):
    """Write the mask as a PGM with ones scaled to white for inspection."""
    write_pgm(path, (mix_mask.mask * 255).astype(np.uint8))
