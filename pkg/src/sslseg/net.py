"""Small fully convolutional segmentation net with hand-written backprop.

Architecture: four 3x3 same-padding convolutions, 3 -> 16 -> 16 -> 16 -> K,
ReLU after the first three, raw logits out. Inputs are RGB in [0, 1] and
are centered by subtracting 0.5 before the first convolution. He-normal
weight init, zero biases. Training uses plain SGD with momentum, decoupled
only in the usual "weight decay added to the gradient" sense, and a
polynomial learning-rate schedule.

Checkpoints are a fixed little-endian binary layout (magic "CSSL") so two
runs of the same config are bit-comparable on disk.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from .tensor import conv2d_backward_nchw, conv2d_nchw

HIDDEN = 16
N_LAYERS = 4
CHECKPOINT_MAGIC = b"CSSL"
CHECKPOINT_VERSION = 1


class NumericsError(RuntimeError):
    """Raised when a loss or gradient goes non-finite during training."""


@dataclass
class SegModel:
    weights: list  # per layer (C_out, C_in, 3, 3)
    biases: list  # per layer (C_out,)
    n_classes: int


def layer_widths(n_classes):
    """(C_in, C_out) per layer."""
    chans = [3, HIDDEN, HIDDEN, HIDDEN, n_classes]
    return list(zip(chans[:-1], chans[1:]))


def init_model(seed, n_classes):
    """He-normal weights, zero biases; draws layer by layer from one stream."""
    if n_classes < 2 or n_classes > 254:
        raise ValueError(f"n_classes must be in [2, 254], got {n_classes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for c_in, c_out in layer_widths(n_classes):
        std = np.sqrt(2.0 / (c_in * 9))
        weights.append((rng.standard_normal((c_out, c_in, 3, 3)) * std).astype(np.float32))
        biases.append(np.zeros(c_out, dtype=np.float32))
    return SegModel(weights=weights, biases=biases, n_classes=n_classes)


def cast_model(model, dtype):
    """Copy of the model with parameters in the given dtype (float64 for
    finite-difference checks)."""
    return SegModel(
        weights=[w.astype(dtype) for w in model.weights],
        biases=[b.astype(dtype) for b in model.biases],
        n_classes=model.n_classes,
    )


def _to_nchw(images):
    images = np.asarray(images)
    if images.ndim != 4 or images.shape[3] != 3:
        raise ValueError(f"expected images of shape (N, H, W, 3), got {images.shape}")
    return images.transpose(0, 3, 1, 2)


def forward_batch(model, images):
    """Logits (N, K, H, W) for a stack of (N, H, W, 3) images, plus the
    activation cache backward_batch needs."""
    x = _to_nchw(images).astype(model.weights[0].dtype) - 0.5
    acts = [x]
    for i in range(N_LAYERS):
        z = conv2d_nchw(acts[-1], model.weights[i], model.biases[i])
        acts.append(np.maximum(z, 0.0) if i < N_LAYERS - 1 else z)
    return acts[-1], acts[:-1]


def backward_batch(model, cache, grad_logits):
    """Parameter gradients for forward_batch; returns (grads_w, grads_b)."""
    grads_w = [None] * N_LAYERS
    grads_b = [None] * N_LAYERS
    grad = grad_logits
    for i in reversed(range(N_LAYERS)):
        grad_in, grads_w[i], grads_b[i] = conv2d_backward_nchw(grad, cache[i], model.weights[i])
        if i > 0:
            grad = grad_in * (cache[i] > 0)
    return grads_w, grads_b


def forward(model, image):
    """Logits (K, H, W) for one (H, W, 3) image."""
    image = np.asarray(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ValueError(f"expected an (H, W, 3) image, got {image.shape}")
    logits, _ = forward_batch(model, image[None])
    return logits[0]


def poly_lr(base_lr, iteration, max_iter, power=0.9):
    """base_lr * (1 - iteration / max_iter) ** power, reaching 0 at max_iter."""
    if max_iter <= 0:
        raise ValueError(f"max_iter must be positive, got {max_iter}")
    if iteration < 0 or iteration > max_iter:
        raise ValueError(f"iteration {iteration} outside [0, {max_iter}]")
    return base_lr * (1.0 - iteration / max_iter) ** power


@dataclass
class SgdState:
    """Momentum buffers, lazily shaped like the model parameters."""

    momentum: float = 0.9
    weight_decay: float = 1e-4
    vel_w: list = field(default_factory=list)
    vel_b: list = field(default_factory=list)


def sgd_step(model, state, grads_w, grads_b, lr):
    """In-place SGD update: v = mu*v + g + wd*theta, theta -= lr*v."""
    if not state.vel_w:
        state.vel_w = [np.zeros_like(w) for w in model.weights]
        state.vel_b = [np.zeros_like(b) for b in model.biases]
    for p, v, g in zip(
        model.weights + model.biases, state.vel_w + state.vel_b, grads_w + grads_b
    ):
        if not np.isfinite(g).all():
            raise NumericsError("non-finite gradient in SGD step")
        v *= state.momentum
        v += g + state.weight_decay * p
        p -= lr * v


def save_checkpoint(path, model):
    """Fixed binary layout: magic, u32 version, u32 n_classes, u32 tensor
    count, then per tensor u32 ndim, u32 extents, float32 data. Tensors are
    interleaved weight/bias per layer; everything little-endian."""
    tensors = [t for pair in zip(model.weights, model.biases) for t in pair]
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<III", CHECKPOINT_VERSION, model.n_classes, len(tensors)))
        for t in tensors:
            f.write(struct.pack("<I", t.ndim))
            f.write(struct.pack(f"<{t.ndim}I", *t.shape))
            f.write(np.ascontiguousarray(t, dtype="<f4").tobytes())


def load_checkpoint(path):
    """Inverse of save_checkpoint, with layout and shape validation."""
    with open(path, "rb") as f:
        data = f.read()

    def take(fmt, offset):
        size = struct.calcsize(fmt)
        if offset + size > len(data):
            raise ValueError(f"{path}: truncated checkpoint at byte {offset}")
        return struct.unpack_from(fmt, data, offset), offset + size

    if data[:4] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad magic {data[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
    (version, n_classes, count), off = take("<III", 4)
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    if count != 2 * N_LAYERS:
        raise ValueError(f"{path}: expected {2 * N_LAYERS} tensors, found {count}")
    tensors = []
    for _ in range(count):
        (ndim,), off = take("<I", off)
        shape, off = take(f"<{ndim}I", off)
        n = int(np.prod(shape, dtype=np.int64)) if ndim else 1
        size = 4 * n
        if off + size > len(data):
            raise ValueError(f"{path}: truncated tensor data at byte {off}")
        tensors.append(np.frombuffer(data[off : off + size], dtype="<f4").reshape(shape).copy())
        off += size
    if off != len(data):
        raise ValueError(f"{path}: {len(data) - off} trailing bytes after tensor data")
    model = SegModel(weights=tensors[0::2], biases=tensors[1::2], n_classes=int(n_classes))
    for (c_in, c_out), w, b in zip(layer_widths(model.n_classes), model.weights, model.biases):
        if w.shape != (c_out, c_in, 3, 3) or b.shape != (c_out,):
            raise ValueError(
                f"{path}: tensor shapes {w.shape}/{b.shape} do not match the "
                f"{c_in}->{c_out} layer"
            )
    return model
