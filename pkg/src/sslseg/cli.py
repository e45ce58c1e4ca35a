"""Command line front-end.

Subcommands: gen-data writes a synthetic dataset to a directory,
train runs a supervised or self-training session from a JSON config,
eval scores a checkpoint, audit dumps pseudo-label diagnostics
(confidence histograms, decile precision, boundary confidence, and
example mixing panels) for a checkpoint.

Exit codes: 0 on success, 2 for usage/config/data problems, 3 when
training hits non-finite numbers.
"""

import argparse
import json
import os
import sys
from dataclasses import asdict, fields

import numpy as np

from .cowmask import generate_cowmask, generate_cutmix_mask, mix
from .data import generate_dataset, load_dataset, save_dataset
from .metrics import accumulate, miou, new_confusion, write_eval_csv, write_metrics_csv
from .net import NumericsError, forward, load_checkpoint, save_checkpoint
from .netpbm import write_ppm
from .pseudolabel import (
    boundary_confidence,
    class_histograms,
    decile_split,
    decile_summary,
    generate_record,
    write_boundary_csv,
    write_decile_csv,
    write_histogram_csv,
)
from .tensor import argmax_channel, softmax_channel
from .train import TrainConfig, iterate, ssl_round

_TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig))
_SSL_ONLY_KEYS = (
    "n_unlab",
    "mixing",
    "sce",
    "alpha",
    "beta",
    "clamp",
    "weighting",
    "filter_q",
    "rounds",
    "ensemble_views",
)


class UsageError(Exception):
    """Bad arguments, config, or input data; maps to exit code 2."""


def _cmd_gen_data(args):
    if os.path.isdir(args.out) and os.listdir(args.out) and not args.force:
        raise UsageError(f"output directory {args.out} is not empty (use --force)")
    dataset = generate_dataset(
        args.seed,
        args.labelled,
        args.unlabelled,
        args.size[0],
        args.size[1],
        args.classes,
        n_eval=args.eval,
    )
    print(save_dataset(dataset, args.out))
    return 0


def _load_train_config(path, mode):
    with open(path) as f:
        try:
            raw = json.load(f)
        except json.JSONDecodeError as e:
            raise UsageError(f"{path}: not valid JSON ({e})") from e
    if not isinstance(raw, dict):
        raise UsageError(f"{path}: top level must be a JSON object")
    allowed = set(_TRAIN_KEYS) | {"data", "out"}
    for key in raw:
        if key not in allowed:
            raise UsageError(f"{path}: unknown config key {key!r}")
    for key in ("data", "out"):
        if key not in raw:
            raise UsageError(f"{path}: missing required key {key!r}")
    try:
        config = TrainConfig(**{k: v for k, v in raw.items() if k in _TRAIN_KEYS})
    except (TypeError, ValueError) as e:
        raise UsageError(f"{path}: {e}") from e
    if mode == "sup":
        noisy = sorted(k for k in _SSL_ONLY_KEYS if k in raw)
        if noisy:
            print(
                f"warning: supervised mode ignores config keys: {', '.join(noisy)}",
                file=sys.stderr,
            )
    return config, raw["data"], raw["out"]


def _cmd_train(args):
    config, data_path, out_dir = _load_train_config(args.config, args.mode)
    dataset = load_dataset(data_path)
    os.makedirs(out_dir, exist_ok=True)
    snapshot = {"mode": args.mode, "data": data_path, "out": out_dir, **asdict(config)}
    with open(os.path.join(out_dir, "config.json"), "w") as f:
        json.dump(snapshot, f, indent=2, sort_keys=True)
        f.write("\n")

    if args.mode == "sup":
        result = ssl_round(config, dataset)
        model, rows = result.model, result.rows
        history = []
    else:
        result = iterate(config, dataset)
        model, rows = result.model, result.rows
        history = result.history
        for r, round_model in enumerate(result.round_models):
            save_checkpoint(os.path.join(out_dir, f"round_{r}.ckpt"), round_model)
    write_metrics_csv(os.path.join(out_dir, "metrics.csv"), rows)
    save_checkpoint(os.path.join(out_dir, "checkpoint.ckpt"), model)
    for r, value in enumerate(history):
        print(f"round {r} mIoU {value:.6f}")
    return 0


def _load_pair(args):
    model = load_checkpoint(args.checkpoint)
    dataset = load_dataset(args.data)
    if model.n_classes != dataset.n_classes:
        raise UsageError(
            f"checkpoint has {model.n_classes} classes but dataset has {dataset.n_classes}"
        )
    return model, dataset


def _cmd_eval(args):
    model, dataset = _load_pair(args)
    pairs = dataset.eval_set if dataset.eval_set else dataset.labelled
    confusion = new_confusion(dataset.n_classes)
    for image, mask in pairs:
        pred = argmax_channel(softmax_channel(forward(model, image)))
        accumulate(confusion, mask, pred)
    print(f"mIoU {miou(confusion):.6f}")
    if args.out:
        write_eval_csv(args.out, confusion)
    return 0


def _cmd_audit(args):
    model, dataset = _load_pair(args)
    os.makedirs(args.out, exist_ok=True)
    if dataset.unlabelled:
        images, truths = dataset.unlabelled, dataset.unlabelled_truth
    else:
        images = [img for img, _ in dataset.labelled]
        truths = [mask for _, mask in dataset.labelled]
    records = [generate_record(model, img) for img in images]

    write_histogram_csv(
        os.path.join(args.out, "histograms.csv"),
        class_histograms(records, dataset.n_classes),
    )
    maps = decile_split(records, dataset.n_classes)
    write_decile_csv(
        os.path.join(args.out, "deciles.csv"),
        decile_summary(records, maps, truths, dataset.n_classes),
    )
    rows, _ = boundary_confidence(records, args.distance)
    write_boundary_csv(os.path.join(args.out, "boundary.csv"), rows)

    if len(images) >= 2:
        x1, x2 = images[0], images[1]
        height, width = x1.shape[:2]
        sigma = 8.0 * min(height, width) / 48.0
        panels = {
            "cow": generate_cowmask(0, height, width, sigma, 0.5),
            "cutmix": generate_cutmix_mask(0, height, width, 0.5),
        }
        zeros = np.zeros((height, width), dtype=np.uint8)
        ones = np.ones((height, width), dtype=np.float32)
        for name, mm in panels.items():
            mixed, _, _ = mix(x1, x2, zeros, zeros, ones, ones, mm)
            mask_rgb = np.repeat(mm.mask[:, :, None].astype(np.float32), 3, axis=2)
            panel = np.concatenate([x1, x2, mask_rgb, mixed], axis=1)
            write_ppm(os.path.join(args.out, f"mix_{name}.ppm"), panel)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sslseg",
        description="Semi-supervised semantic segmentation on synthetic scenes.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset directory")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--labelled", type=int, default=4)
    g.add_argument("--unlabelled", type=int, default=100)
    g.add_argument("--eval", type=int, default=20, help="held-out scenes for scoring")
    g.add_argument("--size", type=int, nargs=2, default=[48, 48], metavar=("H", "W"))
    g.add_argument("--classes", type=int, default=4)
    g.add_argument("--force", action="store_true", help="write into a non-empty directory")

    t = sub.add_parser("train", help="train from a JSON config")
    t.add_argument("--config", required=True, help="JSON file with data/out paths and knobs")
    t.add_argument("--mode", choices=("sup", "ssl"), default="ssl")

    e = sub.add_parser("eval", help="score a checkpoint on a dataset")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--data", required=True, help="dataset manifest.json")
    e.add_argument("--out", help="optional per-class IoU CSV")

    a = sub.add_parser("audit", help="pseudo-label diagnostics for a checkpoint")
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--data", required=True, help="dataset manifest.json")
    a.add_argument("--out", required=True, help="output directory for CSVs and panels")
    a.add_argument("--distance", type=int, default=2, help="near-boundary chessboard distance")

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    handlers = {
        "gen-data": _cmd_gen_data,
        "train": _cmd_train,
        "eval": _cmd_eval,
        "audit": _cmd_audit,
    }
    try:
        return handlers[args.command](args)
    except NumericsError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except (UsageError, OSError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
