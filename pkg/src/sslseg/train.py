"""Training loops: supervised baseline, single self-training rounds, and
the multi-round teacher/student ladder.

Every round trains a fresh student from scratch. A round with a teacher
first freezes that teacher's pseudo-label records (optionally filtered
by per-class confidence), then each step combines a labelled
cross-entropy batch with an unlabelled batch whose views are mixed
pairwise under random masks and scored by the configured pseudo-label
loss. Dynamic weights, when enabled, are recomputed from the current
student on the clean (unflipped, unmixed) images every step and treated
as constants.

Random-stream contract for one round, given its seed: the model init
seed is drawn first; each step then draws labelled indices, labelled
flips, and, only when the unlabelled branch is active, unlabelled
indices, flips, and per-pair mask seeds. A round without a teacher
therefore consumes exactly the same stream as the labelled half of any
other round, so baselines and self-training rounds share labelled
batches when seeded alike.
"""

from dataclasses import dataclass

import numpy as np

from .cowmask import generate_cowmask, generate_cutmix_mask, mix, sample_mask_params
from .data import IGNORE
from .losses import SceConfig, cross_entropy, pseudolabel_weights, weighted_sce
from .metrics import evaluate
from .net import (
    NumericsError,
    SgdState,
    backward_batch,
    forward,
    forward_batch,
    init_model,
    poly_lr,
    sgd_step,
)
from .pseudolabel import (
    PseudoLabelRecord,
    class_histograms,
    classwise_thresholds,
    decile_split,
    decile_summary,
    filter_records,
    generate_record,
)
from .tensor import softmax_channel

MIXINGS = ("cow", "cutmix", "none")


@dataclass
class TrainConfig:
    steps: int = 400
    base_lr: float = 0.02
    poly_power: float = 0.9
    momentum: float = 0.9
    weight_decay: float = 1e-4
    n_lab: int = 2  # labelled images per step
    n_unlab: int = 6  # unlabelled views per step
    mixing: str = "cow"  # "cow", "cutmix", or "none"
    sce: bool = False  # symmetric pseudo-label loss instead of plain CE
    alpha: float = 2.0
    beta: float = 1.0
    clamp: float = -4.0
    weighting: bool = False  # dynamic per-pixel pseudo-label weights
    filter_q: float = 0.0  # per-class fraction of least confident pixels to drop
    rounds: int = 1  # self-training rounds after the supervised round 0
    ensemble_views: int = 1  # teacher views averaged per pseudo-label
    eval_every: int = 0  # 0 disables in-round evaluation rows
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError(f"steps must be positive, got {self.steps}")
        if self.base_lr <= 0:
            raise ValueError(f"base_lr must be positive, got {self.base_lr}")
        if self.poly_power <= 0:
            raise ValueError(f"poly_power must be positive, got {self.poly_power}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if self.n_lab < 1:
            raise ValueError(f"n_lab must be positive, got {self.n_lab}")
        if self.n_unlab < 0:
            raise ValueError(f"n_unlab must be non-negative, got {self.n_unlab}")
        if self.mixing not in MIXINGS:
            raise ValueError(f"mixing must be one of {MIXINGS}, got {self.mixing!r}")
        if not 0.0 <= self.filter_q <= 1.0:
            raise ValueError(f"filter_q must be in [0, 1], got {self.filter_q}")
        if self.rounds < 0:
            raise ValueError(f"rounds must be non-negative, got {self.rounds}")
        if self.ensemble_views < 1:
            raise ValueError(f"ensemble_views must be positive, got {self.ensemble_views}")
        if self.eval_every < 0:
            raise ValueError(f"eval_every must be non-negative, got {self.eval_every}")
        SceConfig(self.alpha, self.beta, self.clamp)


@dataclass
class RoundResult:
    model: object
    rows: list  # metrics rows, one dict per step
    records: list  # pseudo-label records the round trained on (None if supervised)


def _flip_image(img):
    return np.ascontiguousarray(img[:, ::-1, :])


def _flip_map(m):
    return np.ascontiguousarray(m[:, ::-1])


def _sce_config(config):
    if config.sce:
        return SceConfig(config.alpha, config.beta, config.clamp)
    return SceConfig(alpha=1.0, beta=0.0, clamp=-1.0)


def make_records(teacher, dataset, config):
    """Teacher pseudo-labels for every unlabelled image, filtered per config."""
    records = [
        generate_record(teacher, img, config.ensemble_views) for img in dataset.unlabelled
    ]
    if config.filter_q > 0:
        hists = class_histograms(records, dataset.n_classes)
        records = filter_records(records, classwise_thresholds(hists, config.filter_q))
    return records


def weight_separation(model, dataset, records):
    """(mean weight on correct pseudo-labels, mean on wrong ones), judged
    against the held-back unlabelled ground truth; None where a side is empty."""
    if dataset.unlabelled_truth is None:
        raise ValueError("dataset carries no unlabelled ground truth")
    sums = [0.0, 0.0]
    counts = [0, 0]
    for img, truth, rec in zip(dataset.unlabelled, dataset.unlabelled_truth, records):
        probs = softmax_channel(forward(model, img))
        w = pseudolabel_weights(probs, rec.labels, rec.valid)
        scored = rec.valid & (truth != IGNORE)
        for side, sel in enumerate((scored & (rec.labels == truth), scored & (rec.labels != truth))):
            sums[side] += float(w[sel].sum(dtype=np.float64))
            counts[side] += int(sel.sum())
    return tuple(sums[i] / counts[i] if counts[i] else None for i in (0, 1))


def _make_mask(kind, seed_params, seed_mask, height, width):
    sigma, p = sample_mask_params(seed_params, height, width)
    if kind == "cow":
        return generate_cowmask(seed_mask, height, width, sigma, p)
    return generate_cutmix_mask(seed_mask, height, width, p)


def ssl_round(config, dataset, teacher=None, seed=None, records=None, round_index=0):
    """Train one student from scratch; returns a RoundResult.

    Without a teacher or records this is the supervised baseline. With a
    teacher, records are generated (and filtered) up front; passing
    `records` explicitly skips both and trains on them as-is, which is how
    the decile experiment injects its slices.
    """
    if seed is None:
        seed = config.seed
    rng = np.random.default_rng(seed)
    model = init_model(int(rng.integers(2**63)), dataset.n_classes)

    if records is None and teacher is not None:
        records = make_records(teacher, dataset, config)
    use_unsup = records is not None and config.n_unlab > 0 and len(dataset.unlabelled) > 0
    if use_unsup and not any(rec.valid.any() for rec in records):
        raise NumericsError("every pseudo-label pixel was filtered out")

    sce_cfg = _sce_config(config)
    state = SgdState(momentum=config.momentum, weight_decay=config.weight_decay)
    eval_pairs = dataset.eval_set if dataset.eval_set else dataset.labelled
    rows = []

    for step in range(config.steps):
        lr = poly_lr(config.base_lr, step, config.steps, config.poly_power)

        lab_idx = rng.integers(0, len(dataset.labelled), size=config.n_lab)
        lab_flip = rng.integers(0, 2, size=config.n_lab)
        images, masks = [], []
        for i, fl in zip(lab_idx, lab_flip):
            img, msk = dataset.labelled[i]
            images.append(_flip_image(img) if fl else img)
            masks.append(_flip_map(msk) if fl else msk)
        logits, cache = forward_batch(model, np.stack(images))
        grad_logits = np.empty_like(logits)
        loss_sup = 0.0
        for j in range(config.n_lab):
            loss_j, grad_j = cross_entropy(softmax_channel(logits[j]), masks[j])
            loss_sup += loss_j / config.n_lab
            grad_logits[j] = grad_j / config.n_lab
        grads_w, grads_b = backward_batch(model, cache, grad_logits)

        loss_unsup = None
        if use_unsup:
            un_idx = rng.integers(0, len(dataset.unlabelled), size=config.n_unlab)
            un_flip = rng.integers(0, 2, size=config.n_unlab)

            if config.weighting:
                clean = np.stack([dataset.unlabelled[i] for i in un_idx])
                logits_c, _ = forward_batch(model, clean)
            views, targets, weights = [], [], []
            for j, (i, fl) in enumerate(zip(un_idx, un_flip)):
                rec = records[i]
                if config.weighting:
                    w = pseudolabel_weights(
                        softmax_channel(logits_c[j]), rec.labels, rec.valid
                    )
                else:
                    w = rec.valid.astype(np.float32)
                views.append(_flip_image(dataset.unlabelled[i]) if fl else dataset.unlabelled[i])
                targets.append(_flip_map(rec.labels) if fl else rec.labels)
                weights.append(_flip_map(w) if fl else w)

            if config.mixing == "none":
                batch, batch_targets, batch_weights = views, targets, weights
            else:
                n_pairs = (config.n_unlab + 1) // 2
                pairs = [
                    (2 * p, (2 * p + 1) % config.n_unlab) for p in range(n_pairs)
                ]
                mask_seeds = rng.integers(0, 2**63, size=(n_pairs, 2))
                batch, batch_targets, batch_weights = [], [], []
                for (a, b), (sp, sm) in zip(pairs, mask_seeds):
                    height, width = targets[a].shape
                    mm = _make_mask(config.mixing, int(sp), int(sm), height, width)
                    xm, ym, wm = mix(
                        views[a], views[b], targets[a], targets[b],
                        weights[a], weights[b], mm,
                    )
                    batch.append(xm)
                    batch_targets.append(ym)
                    batch_weights.append(wm)

            logits_u, cache_u = forward_batch(model, np.stack(batch))
            grad_u = np.empty_like(logits_u)
            loss_unsup = 0.0
            for j in range(len(batch)):
                loss_j, grad_j = weighted_sce(
                    softmax_channel(logits_u[j]), batch_targets[j], batch_weights[j], sce_cfg
                )
                loss_unsup += loss_j / len(batch)
                grad_u[j] = grad_j / len(batch)
            gwu, gbu = backward_batch(model, cache_u, grad_u)
            grads_w = [g + gu for g, gu in zip(grads_w, gwu)]
            grads_b = [g + gu for g, gu in zip(grads_b, gbu)]

        if not np.isfinite(loss_sup) or (loss_unsup is not None and not np.isfinite(loss_unsup)):
            raise NumericsError(f"non-finite loss at step {step}")
        sgd_step(model, state, grads_w, grads_b, lr)

        row = {
            "round": round_index,
            "step": step,
            "lr": lr,
            "loss_sup": loss_sup,
            "loss_unsup": loss_unsup,
        }
        last = step == config.steps - 1
        if config.eval_every > 0 and ((step + 1) % config.eval_every == 0 or last):
            row["miou_eval"] = evaluate(model, eval_pairs, dataset.n_classes)
            if use_unsup and config.weighting and dataset.unlabelled_truth is not None:
                row["mean_w_correct"], row["mean_w_wrong"] = weight_separation(
                    model, dataset, records
                )
        rows.append(row)

    return RoundResult(model=model, rows=rows, records=records)


def train_supervised(config, dataset, seed=None):
    """Labelled-only baseline; returns a RoundResult with records=None."""
    return ssl_round(config, dataset, teacher=None, seed=seed)


@dataclass
class IterateResult:
    model: object
    rows: list
    history: list  # per-round mIoU on the eval scenes (index 0 = supervised)
    round_models: list  # model after each round, index 0 = supervised


def iterate(config, dataset):
    """Round 0 supervised, then config.rounds self-training rounds, each
    promoting the previous student to teacher.

    Every round runs on the master seed: the same fresh init and the same
    labelled batch sequence, so round 0 is bitwise the model a supervised
    run of the same config would produce, and consecutive rounds differ
    only through the evolving pseudo-labels. Re-seeding per round would
    reroll the student's init luck each round, which at this scale swamps
    the per-round gain with noise."""
    eval_pairs = dataset.eval_set if dataset.eval_set else dataset.labelled
    model = None
    rows, history, round_models = [], [], []
    for r in range(config.rounds + 1):
        result = ssl_round(
            config,
            dataset,
            teacher=model if r > 0 else None,
            seed=config.seed,
            round_index=r,
        )
        model = result.model
        rows.extend(result.rows)
        history.append(evaluate(model, eval_pairs, dataset.n_classes))
        round_models.append(model)
    return IterateResult(model=model, rows=rows, history=history,
                         round_models=round_models)


def decile_experiment(config, dataset, seed=None):
    """Rank a teacher's pseudo-labels into class-wise confidence deciles and
    self-train one student per decile slice.

    Returns (rows, mious): rows are (class, decile, pixel_count, precision,
    mean_confidence) tuples for the decile CSV, mious the per-decile student
    mIoU, index 0 being the least confident slice. Precision needs the
    dataset's held-back unlabelled ground truth.
    """
    if dataset.unlabelled_truth is None:
        raise ValueError("decile precision needs unlabelled ground truth")
    if seed is None:
        seed = config.seed
    teacher = ssl_round(config, dataset, seed=seed).model
    records = [
        generate_record(teacher, img, config.ensemble_views) for img in dataset.unlabelled
    ]
    maps = decile_split(records, dataset.n_classes)
    rows = decile_summary(records, maps, dataset.unlabelled_truth, dataset.n_classes)

    eval_pairs = dataset.eval_set if dataset.eval_set else dataset.labelled
    mious = []
    for d in range(10):
        slice_records = [
            PseudoLabelRecord(labels=rec.labels, confidence=rec.confidence, valid=dmap == d)
            for rec, dmap in zip(records, maps)
        ]
        # every slice trains from the same seed, so the ten mIoUs differ
        # only through which pseudo-labels were allowed in
        result = ssl_round(
            config, dataset, records=slice_records, seed=seed, round_index=d
        )
        mious.append(evaluate(result.model, eval_pairs, dataset.n_classes))
    return rows, mious
