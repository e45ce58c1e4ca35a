"""Estimator front-end in the fit/predict mold.

SupervisedSegmenter trains the baseline net on (image, mask) pairs.
SelfTrainingSegmenter additionally accepts unlabelled images, marked by
a None target or an all-ignore mask, and runs the teacher/student
rounds over them. Both take lists (or a stacked array) of (H, W, 3)
float images in [0, 1] and (H, W) uint8 masks, predict per-pixel class
maps, and score with mean IoU rather than accuracy.
"""

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .data import IGNORE, Dataset
from .metrics import accumulate, miou, new_confusion
from .net import forward
from .tensor import argmax_channel, softmax_channel
from .train import TrainConfig, iterate


def check_images(X):
    """Coerce to a list of float32 (H, W, 3) images in [0, 1]."""
    if isinstance(X, np.ndarray) and X.ndim == 4:
        X = list(X)
    images = []
    for i, img in enumerate(X):
        img = np.asarray(img, dtype=np.float32)
        if img.ndim != 3 or img.shape[2] != 3:
            raise ValueError(f"image {i} has shape {img.shape}, expected (H, W, 3)")
        if not np.isfinite(img).all():
            raise ValueError(f"image {i} contains non-finite values")
        if img.min() < 0.0 or img.max() > 1.0:
            raise ValueError(f"image {i} has values outside [0, 1]")
        images.append(img)
    if not images:
        raise ValueError("need at least one image")
    return images


def check_masks(y, images, allow_unlabelled=False):
    """Coerce targets to uint8 masks matching their images; None (or an
    all-ignore mask) marks an image unlabelled when allowed."""
    if len(y) != len(images):
        raise ValueError(f"got {len(images)} images but {len(y)} targets")
    masks = []
    for i, (m, img) in enumerate(zip(y, images)):
        if m is None:
            if not allow_unlabelled:
                raise ValueError(f"target {i} is None but unlabelled data is not accepted")
            masks.append(None)
            continue
        m = np.asarray(m)
        if m.shape != img.shape[:2]:
            raise ValueError(f"mask {i} shape {m.shape} does not match image {img.shape[:2]}")
        if m.dtype != np.uint8:
            if not np.issubdtype(m.dtype, np.integer) or m.min() < 0 or m.max() > 255:
                raise ValueError(f"mask {i} is not a uint8 class map")
            m = m.astype(np.uint8)
        if allow_unlabelled and (m == IGNORE).all():
            masks.append(None)
            continue
        masks.append(m)
    return masks


def _infer_n_classes(masks):
    top = -1
    for m in masks:
        if m is None:
            continue
        real = m[m != IGNORE]
        if real.size:
            top = max(top, int(real.max()))
    if top < 1:
        raise ValueError("targets contain fewer than 2 classes")
    return top + 1


class _SegmenterBase(BaseEstimator):
    def _model(self):
        if not hasattr(self, "model_"):
            raise NotFittedError(
                f"{type(self).__name__} is not fitted yet; call fit first"
            )
        return self.model_

    def predict_proba(self, X):
        """Per-pixel class probabilities, one (K, H, W) array per image."""
        model = self._model()
        return [softmax_channel(forward(model, img)) for img in check_images(X)]

    def predict(self, X):
        """Per-pixel class maps, one (H, W) uint8 array per image."""
        return [argmax_channel(p) for p in self.predict_proba(X)]

    def score(self, X, y):
        """Mean IoU of predictions against ground-truth masks."""
        images = check_images(X)
        masks = check_masks(y, images)
        confusion = new_confusion(self.n_classes_)
        for img, mask, pred in zip(images, masks, self.predict(images)):
            accumulate(confusion, mask, pred)
        return miou(confusion)


class SupervisedSegmenter(_SegmenterBase):
    """Baseline segmenter trained on labelled scenes only."""

    def __init__(self, steps=400, base_lr=0.02, n_lab=2, n_classes=None, seed=0):
        self.steps = steps
        self.base_lr = base_lr
        self.n_lab = n_lab
        self.n_classes = n_classes
        self.seed = seed

    def _config(self):
        return TrainConfig(
            steps=self.steps,
            base_lr=self.base_lr,
            n_lab=self.n_lab,
            n_unlab=0,
            rounds=0,
            seed=self.seed,
        )

    def fit(self, X, y):
        images = check_images(X)
        masks = check_masks(y, images)
        self.n_classes_ = self.n_classes or _infer_n_classes(masks)
        dataset = Dataset(
            labelled=list(zip(images, masks)), unlabelled=[], n_classes=self.n_classes_
        )
        result = iterate(self._config(), dataset)
        self.model_ = result.model
        self.history_ = result.history
        return self


class SelfTrainingSegmenter(_SegmenterBase):
    """Teacher/student segmenter that also learns from unlabelled images.

    Mark an image unlabelled by passing None (or an all-ignore mask) as
    its target. Parameters mirror the training configuration: mixing
    picks the mask family applied to unlabelled pairs, sce/weighting
    switch the symmetric loss and dynamic pseudo-label weights, filter_q
    drops the least confident fraction of each class, rounds is the
    number of self-training rounds after the supervised one.
    """

    def __init__(
        self,
        steps=400,
        base_lr=0.02,
        n_lab=2,
        n_unlab=6,
        mixing="cow",
        sce=True,
        alpha=2.0,
        beta=1.0,
        clamp=-4.0,
        weighting=True,
        filter_q=0.0,
        rounds=1,
        ensemble_views=1,
        n_classes=None,
        seed=0,
    ):
        self.steps = steps
        self.base_lr = base_lr
        self.n_lab = n_lab
        self.n_unlab = n_unlab
        self.mixing = mixing
        self.sce = sce
        self.alpha = alpha
        self.beta = beta
        self.clamp = clamp
        self.weighting = weighting
        self.filter_q = filter_q
        self.rounds = rounds
        self.ensemble_views = ensemble_views
        self.n_classes = n_classes
        self.seed = seed

    def _config(self):
        return TrainConfig(
            steps=self.steps,
            base_lr=self.base_lr,
            n_lab=self.n_lab,
            n_unlab=self.n_unlab,
            mixing=self.mixing,
            sce=self.sce,
            alpha=self.alpha,
            beta=self.beta,
            clamp=self.clamp,
            weighting=self.weighting,
            filter_q=self.filter_q,
            rounds=self.rounds,
            ensemble_views=self.ensemble_views,
            seed=self.seed,
        )

    def fit(self, X, y):
        images = check_images(X)
        masks = check_masks(y, images, allow_unlabelled=True)
        labelled = [(img, m) for img, m in zip(images, masks) if m is not None]
        unlabelled = [img for img, m in zip(images, masks) if m is None]
        if not labelled:
            raise ValueError("need at least one labelled image")
        self.n_classes_ = self.n_classes or _infer_n_classes(masks)
        dataset = Dataset(
            labelled=labelled, unlabelled=unlabelled, n_classes=self.n_classes_
        )
        result = iterate(self._config(), dataset)
        self.model_ = result.model
        self.history_ = result.history
        return self
