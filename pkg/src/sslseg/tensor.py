"""Dense array primitives for the segmentation nets.

2-D convolution with exact analytic gradients, separable Gaussian
filtering, and per-pixel softmax/argmax over the class axis. Everything
operates on plain numpy arrays (float32 in training, float64 for
gradient verification) and is a pure function of its inputs.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _check_kernel(kernel):
    if kernel.ndim != 4:
        raise ValueError(f"kernel must be 4-D (C_out, C_in, k, k), got shape {kernel.shape}")
    if kernel.shape[2] != kernel.shape[3]:
        raise ValueError(f"kernel must be square, got {kernel.shape[2]}x{kernel.shape[3]}")
    if kernel.shape[2] % 2 != 1:
        raise ValueError(f"kernel size must be odd, got {kernel.shape[2]}")


def _im2col(x, k):
    """Patch matrix of a padded (N, C, Hp, Wp) batch: (N*H*W, C*k*k)."""
    n, c = x.shape[:2]
    h, w = x.shape[2] - k + 1, x.shape[3] - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (N, C, H, W, k, k)
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * k * k), h, w


def conv2d_nchw(x, kernel, bias):
    """Batched same-padding cross-correlation: (N, C_in, H, W) -> (N, C_out, H, W)."""
    _check_kernel(kernel)
    if x.ndim != 4:
        raise ValueError(f"input must be 4-D (N, C_in, H, W), got shape {x.shape}")
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    if bias.shape != (kernel.shape[0],):
        raise ValueError(f"bias shape {bias.shape} does not match {kernel.shape[0]} output channels")
    n = x.shape[0]
    co, _, k, _ = kernel.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols, h, w = _im2col(xp, k)
    out = cols @ kernel.reshape(co, -1).T + bias
    return out.reshape(n, h, w, co).transpose(0, 3, 1, 2)


def conv2d_backward_nchw(grad_out, x, kernel):
    """Gradients of conv2d_nchw. Returns (grad_input, grad_kernel, grad_bias)."""
    _check_kernel(kernel)
    if grad_out.shape != (x.shape[0], kernel.shape[0], x.shape[2], x.shape[3]):
        raise ValueError(
            f"grad_out shape {grad_out.shape} inconsistent with input {x.shape} "
            f"and kernel {kernel.shape}"
        )
    if x.shape[1] != kernel.shape[1]:
        raise ValueError(f"input has {x.shape[1]} channels, kernel expects {kernel.shape[1]}")
    n = x.shape[0]
    co, ci, k, _ = kernel.shape
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    cols, h, w = _im2col(xp, k)
    gflat = grad_out.transpose(0, 2, 3, 1).reshape(n * h * w, co)
    grad_kernel = (gflat.T @ cols).reshape(co, ci, k, k)
    grad_bias = gflat.sum(axis=0)
    # grad wrt input is the correlation of grad_out with the flipped,
    # transposed kernel under the same zero padding
    flipped = np.ascontiguousarray(kernel[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_input = conv2d_nchw(grad_out, flipped, np.zeros(ci, dtype=kernel.dtype))
    return grad_input, grad_kernel, grad_bias


def conv2d(x, kernel, bias):
    """Same-padding cross-correlation plus bias.

    x: (C_in, H, W); kernel: (C_out, C_in, k, k) with k odd; bias: (C_out,).
    Zero padding of (k-1)//2 keeps the spatial extent.
    """
    if x.ndim != 3:
        raise ValueError(f"input must be 3-D (C_in, H, W), got shape {x.shape}")
    return conv2d_nchw(x[None], kernel, bias)[0]


def conv2d_backward(grad_out, x, kernel):
    """Analytic gradients of conv2d at (x, kernel) under cotangent grad_out.

    Returns (grad_input, grad_kernel, grad_bias).
    """
    if x.ndim != 3 or grad_out.ndim != 3:
        raise ValueError("conv2d_backward expects 3-D grad_out and input")
    gx, gk, gb = conv2d_backward_nchw(grad_out[None], x[None], kernel)
    return gx[0], gk, gb


def gaussian_kernel1d(sigma):
    """Discrete Gaussian truncated at radius ceil(3*sigma), renormalized to sum 1."""
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_filter(field, sigma):
    """Separable Gaussian smoothing of a 2-D field with reflect padding."""
    field = np.asarray(field)
    if field.ndim != 2:
        raise ValueError(f"field must be 2-D, got shape {field.shape}")
    k = gaussian_kernel1d(sigma)
    r = (len(k) - 1) // 2
    out = field.astype(np.float64, copy=False)
    for axis in (0, 1):
        pad = [(0, 0), (0, 0)]
        pad[axis] = (r, r)
        padded = np.pad(out, pad, mode="reflect")
        out = sliding_window_view(padded, 2 * r + 1, axis=axis) @ k
    if np.issubdtype(field.dtype, np.floating):
        return out.astype(field.dtype, copy=False)
    return out


def softmax_channel(logits):
    """Per-pixel softmax over axis 0 of a (K, H, W) array, stabilized by max-subtraction."""
    logits = np.asarray(logits)
    if logits.ndim != 3 or logits.shape[0] < 2:
        raise ValueError(f"logits must be (K, H, W) with K >= 2, got shape {logits.shape}")
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def argmax_channel(probs):
    """Per-pixel argmax over axis 0; ties resolve to the lowest class index."""
    probs = np.asarray(probs)
    if probs.ndim != 3 or probs.shape[0] < 2:
        raise ValueError(f"probs must be (K, H, W) with K >= 2, got shape {probs.shape}")
    if probs.shape[0] > 255:
        raise ValueError("more than 255 classes collide with the ignore sentinel")
    return probs.argmax(axis=0).astype(np.uint8)
