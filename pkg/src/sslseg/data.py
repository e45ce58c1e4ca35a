"""Procedural synthetic segmentation scenes and dataset/manifest IO.

A scene is a textured background (class 0) with 2-5 random shapes
(discs, rectangles, triangles) drawn over it in class-specific colors,
plus global brightness jitter and per-pixel noise. Later shapes occlude
earlier ones; the mask records the topmost class per pixel. Everything
is a pure function of the seed.
"""

import colorsys
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .netpbm import read_pgm, read_ppm, write_pgm, write_ppm
from .tensor import gaussian_filter

IGNORE = 255

# scene texture parameters; the per-scene color cast and noise amplitudes
# are what make a few-label model produce genuinely wrong pseudo-labels
_PIXEL_NOISE = 0.06
_COLOR_CAST = 0.09  # per-scene, per-channel additive shift
_BACKGROUND_TEXTURE = 0.06
_TINT_JITTER = 0.05
_MAX_SHAPES = 5
_MIN_SHAPES = 2


def class_colors(n_classes):
    """Deliberately similar base colors, one per class; class 0 is the background."""
    colors = np.empty((n_classes, 3), dtype=np.float64)
    colors[0] = (0.40, 0.42, 0.44)
    for c in range(1, n_classes):
        hue = 0.50 + 0.40 * (c - 1) / max(n_classes - 2, 1)
        colors[c] = colorsys.hsv_to_rgb(hue % 1.0, 0.60, 0.58)
    return colors


def _draw_shape(rng, h, w):
    """Boolean footprint of one random disc, rectangle, or triangle."""
    yy, xx = np.mgrid[0:h, 0:w]
    kind = rng.integers(0, 3)
    if kind == 0:  # disc
        cy, cx = rng.uniform(0.15 * h, 0.85 * h), rng.uniform(0.15 * w, 0.85 * w)
        r = rng.uniform(0.12 * min(h, w), 0.30 * min(h, w))
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == 1:  # axis-aligned rectangle
        ch, cw = rng.uniform(0.10 * h, 0.30 * h), rng.uniform(0.10 * w, 0.30 * w)
        cy, cx = rng.uniform(ch, h - ch), rng.uniform(cw, w - cw)
        return (np.abs(yy - cy) <= ch) & (np.abs(xx - cx) <= cw)
    # triangle: three vertices, resampled until clearly non-degenerate
    for _ in range(20):
        vy = rng.uniform(0.05 * h, 0.95 * h, size=3)
        vx = rng.uniform(0.05 * w, 0.95 * w, size=3)
        area2 = abs(
            (vx[1] - vx[0]) * (vy[2] - vy[0]) - (vx[2] - vx[0]) * (vy[1] - vy[0])
        )
        if area2 >= 0.04 * h * w:
            break
    inside = np.ones((h, w), dtype=bool)
    for i in range(3):
        j = (i + 1) % 3
        k = 3 - i - j if i + j < 3 else 0
        edge = (vx[j] - vx[i]) * (yy - vy[i]) - (vy[j] - vy[i]) * (xx - vx[i])
        ref = (vx[j] - vx[i]) * (vy[k] - vy[i]) - (vy[j] - vy[i]) * (vx[k] - vx[i])
        inside &= (edge * ref) >= 0
    return inside


def generate_scene(seed, height, width, n_classes):
    """One (image, mask) pair; image (H, W, 3) float32 in [0, 1], mask (H, W) uint8."""
    if n_classes < 2:
        raise ValueError(f"need at least 2 classes, got {n_classes}")
    if height < 16 or width < 16:
        raise ValueError(f"scene must be at least 16x16, got {height}x{width}")
    rng = np.random.default_rng(seed)
    colors = class_colors(n_classes)

    image = np.empty((height, width, 3), dtype=np.float64)
    image[:] = colors[0]
    texture = gaussian_filter(rng.standard_normal((height, width)), 4.0)
    texture *= _BACKGROUND_TEXTURE / max(texture.std(), 1e-9)
    image += texture[:, :, None]
    mask = np.zeros((height, width), dtype=np.uint8)

    n_shapes = int(rng.integers(_MIN_SHAPES, _MAX_SHAPES + 1))
    for _ in range(n_shapes):
        cls = int(rng.integers(1, n_classes))
        footprint = _draw_shape(rng, height, width)
        tint = colors[cls] + rng.normal(0.0, _TINT_JITTER, size=3)
        image[footprint] = tint
        mask[footprint] = cls

    image += rng.uniform(-_COLOR_CAST, _COLOR_CAST, size=3)
    image += rng.normal(0.0, _PIXEL_NOISE, size=image.shape)
    return np.clip(image, 0.0, 1.0).astype(np.float32), mask


@dataclass
class Dataset:
    """Labelled pairs, unlabelled images, and optional held-out / audit extras."""

    labelled: list
    unlabelled: list
    n_classes: int
    eval_set: list = field(default_factory=list)
    unlabelled_truth: list = None

    def __post_init__(self):
        if len(self.labelled) < 1:
            raise ValueError("dataset needs at least one labelled scene")
        for _, mask in self.labelled:
            bad = mask[(mask != IGNORE) & (mask >= self.n_classes)]
            if bad.size:
                raise ValueError(f"labelled mask contains class {bad[0]} >= {self.n_classes}")


def generate_dataset(seed, n_labelled, n_unlabelled, height, width, n_classes, n_eval=0):
    """Seeded dataset; the labelled split is regenerated until every class occurs.

    Unlabelled scenes keep their ground-truth masks in `unlabelled_truth`
    for pseudo-label audits; training code never reads them.
    """
    if n_labelled < 1:
        raise ValueError("need at least one labelled scene")
    master = np.random.default_rng(seed)
    labelled = None
    for _ in range(100):
        scene_seeds = master.integers(0, 2**63, size=n_labelled)
        candidate = [generate_scene(s, height, width, n_classes) for s in scene_seeds]
        present = np.zeros(n_classes, dtype=bool)
        for _, mask in candidate:
            present[np.unique(mask[mask != IGNORE])] = True
        if present.all():
            labelled = candidate
            break
    if labelled is None:
        raise ValueError(
            f"could not cover all {n_classes} classes in {n_labelled} labelled scenes "
            "after 100 attempts"
        )
    unlab_scenes = [
        generate_scene(s, height, width, n_classes)
        for s in master.integers(0, 2**63, size=n_unlabelled)
    ]
    eval_scenes = [
        generate_scene(s, height, width, n_classes)
        for s in master.integers(0, 2**63, size=n_eval)
    ]
    return Dataset(
        labelled=labelled,
        unlabelled=[img for img, _ in unlab_scenes],
        n_classes=n_classes,
        eval_set=eval_scenes,
        unlabelled_truth=[mask for _, mask in unlab_scenes],
    )


def save_dataset(dataset, out_dir):
    """Write images/masks as PPM/PGM plus a manifest.json; returns the manifest path."""
    os.makedirs(out_dir, exist_ok=True)
    manifest = {"n_classes": dataset.n_classes, "labelled": [], "unlabelled": [], "eval": []}
    for i, (img, mask) in enumerate(dataset.labelled):
        ipath, mpath = f"labelled_{i:04d}.ppm", f"labelled_{i:04d}.pgm"
        write_ppm(os.path.join(out_dir, ipath), img)
        write_pgm(os.path.join(out_dir, mpath), mask)
        manifest["labelled"].append({"image": ipath, "mask": mpath})
    if dataset.unlabelled_truth is not None:
        manifest["unlabelled_truth"] = []
    for i, img in enumerate(dataset.unlabelled):
        ipath = f"unlabelled_{i:04d}.ppm"
        write_ppm(os.path.join(out_dir, ipath), img)
        manifest["unlabelled"].append(ipath)
        if dataset.unlabelled_truth is not None:
            tpath = f"unlabelled_{i:04d}_truth.pgm"
            write_pgm(os.path.join(out_dir, tpath), dataset.unlabelled_truth[i])
            manifest["unlabelled_truth"].append(tpath)
    for i, (img, mask) in enumerate(dataset.eval_set):
        ipath, mpath = f"eval_{i:04d}.ppm", f"eval_{i:04d}.pgm"
        write_ppm(os.path.join(out_dir, ipath), img)
        write_pgm(os.path.join(out_dir, mpath), mask)
        manifest["eval"].append({"image": ipath, "mask": mpath})
    manifest_path = os.path.join(out_dir, "manifest.json")
    with open(manifest_path, "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")
    return manifest_path


def load_dataset(manifest_path):
    """Load a dataset written by save_dataset."""
    with open(manifest_path) as f:
        manifest = json.load(f)
    base = os.path.dirname(manifest_path)
    labelled = [
        (read_ppm(os.path.join(base, e["image"])), read_pgm(os.path.join(base, e["mask"])))
        for e in manifest["labelled"]
    ]
    unlabelled = [read_ppm(os.path.join(base, p)) for p in manifest["unlabelled"]]
    truth = None
    if manifest.get("unlabelled_truth"):
        truth = [read_pgm(os.path.join(base, p)) for p in manifest["unlabelled_truth"]]
    eval_set = [
        (read_ppm(os.path.join(base, e["image"])), read_pgm(os.path.join(base, e["mask"])))
        for e in manifest.get("eval", [])
    ]
    return Dataset(
        labelled=labelled,
        unlabelled=unlabelled,
        n_classes=int(manifest["n_classes"]),
        eval_set=eval_set,
        unlabelled_truth=truth,
    )
