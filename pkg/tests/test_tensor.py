"""Tensor primitives against brute-force oracles and finite differences."""

import numpy as np
import pytest

from sslseg.tensor import (
    argmax_channel,
    conv2d,
    conv2d_backward,
    gaussian_filter,
    gaussian_kernel1d,
    softmax_channel,
)

from fdcheck import fd_gradient, rel_error


def conv2d_loops(x, kernel, bias):
    """Quadruple-loop same-padding cross-correlation, the slow oracle."""
    c_out, c_in, kh, kw = kernel.shape
    _, h, w = x.shape
    pad = kh // 2
    xp = np.zeros((c_in, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
    xp[:, pad : pad + h, pad : pad + w] = x
    out = np.zeros((c_out, h, w), dtype=x.dtype)
    for co in range(c_out):
        for y in range(h):
            for xx in range(w):
                acc = bias[co]
                for ci in range(c_in):
                    for dy in range(kh):
                        for dx in range(kw):
                            acc += kernel[co, ci, dy, dx] * xp[ci, y + dy, xx + dx]
                out[co, y, xx] = acc
    return out


@pytest.mark.parametrize("seed", range(4))
def test_conv2d_matches_loop_oracle(seed):
    rng = np.random.default_rng(seed)
    c_in, c_out, h, w = rng.integers(1, 4), rng.integers(1, 4), 5, 6
    x = rng.standard_normal((c_in, h, w))
    kernel = rng.standard_normal((c_out, c_in, 3, 3))
    bias = rng.standard_normal(c_out)
    got = conv2d(x, kernel, bias)
    want = conv2d_loops(x, kernel, bias)
    np.testing.assert_allclose(got, want, rtol=1e-12, atol=1e-12)


def test_conv2d_identity_kernel_passes_input_through():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, 7, 7))
    kernel = np.zeros((2, 2, 3, 3))
    kernel[0, 0, 1, 1] = 1.0
    kernel[1, 1, 1, 1] = 1.0
    out = conv2d(x, kernel, np.zeros(2))
    np.testing.assert_array_equal(out, x)


def test_conv2d_rejects_bad_shapes():
    x = np.zeros((2, 5, 5))
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((3, 2, 3, 4)), np.zeros(3))
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((3, 1, 3, 3)), np.zeros(3))
    with pytest.raises(ValueError):
        conv2d(x, np.zeros((3, 2, 3, 3)), np.zeros(4))


@pytest.mark.parametrize("seed", range(3))
def test_conv2d_backward_matches_finite_differences(seed):
    rng = np.random.default_rng(100 + seed)
    x = rng.standard_normal((2, 5, 5))
    kernel = rng.standard_normal((3, 2, 3, 3))
    bias = rng.standard_normal(3)
    target = rng.standard_normal((3, 5, 5))

    def loss():
        return 0.5 * float(((conv2d(x, kernel, bias) - target) ** 2).sum())

    grad_out = conv2d(x, kernel, bias) - target
    grad_x, grad_k, grad_b = conv2d_backward(grad_out, x, kernel)
    assert rel_error(grad_x, fd_gradient(loss, x)) < 1e-7
    assert rel_error(grad_k, fd_gradient(loss, kernel)) < 1e-7
    assert rel_error(grad_b, fd_gradient(loss, bias)) < 1e-7


def test_gaussian_kernel1d_normalized_and_symmetric():
    k = gaussian_kernel1d(2.0)
    assert k.size == 2 * 6 + 1
    assert abs(k.sum() - 1.0) < 1e-12
    np.testing.assert_allclose(k, k[::-1])
    with pytest.raises(ValueError):
        gaussian_kernel1d(0.0)
    with pytest.raises(ValueError):
        gaussian_kernel1d(-1.0)


def test_gaussian_filter_impulse_is_separable_kernel():
    field = np.zeros((33, 33))
    field[16, 16] = 1.0
    out = gaussian_filter(field, 2.0)
    k = gaussian_kernel1d(2.0)
    assert abs(out.sum() - 1.0) < 1e-5
    assert abs(out[16, 16] - k[6] * k[6]) < 1e-12
    np.testing.assert_allclose(out[10:23, 10:23], np.outer(k, k), atol=1e-12)
    rim = out.copy()
    rim[10:23, 10:23] = 0.0
    assert np.abs(rim).max() == 0.0


def test_gaussian_filter_tiny_sigma_is_near_identity():
    rng = np.random.default_rng(1)
    field = rng.standard_normal((20, 20))
    out = gaussian_filter(field, 0.2)
    assert np.abs(out - field).max() < 1e-4


def test_gaussian_filter_preserves_constant_fields():
    out = gaussian_filter(np.full((16, 16), 3.5), 4.0)
    np.testing.assert_allclose(out, 3.5, rtol=1e-12)


def test_softmax_channel_known_values():
    logits = np.array([1.0, 2.0, 3.0]).reshape(3, 1, 1)
    probs = softmax_channel(logits)
    np.testing.assert_allclose(
        probs[:, 0, 0], [0.09003057, 0.24472847, 0.66524096], atol=1e-5
    )
    assert abs(probs.sum() - 1.0) < 1e-12


def test_softmax_channel_shift_invariant_and_overflow_safe():
    rng = np.random.default_rng(2)
    logits = rng.standard_normal((4, 3, 3))
    np.testing.assert_allclose(
        softmax_channel(logits), softmax_channel(logits + 1000.0), atol=1e-12
    )
    assert np.isfinite(softmax_channel(logits + 1e4)).all()


def test_argmax_channel_breaks_ties_toward_lowest_class():
    probs = np.full((3, 2, 2), 1.0 / 3.0)
    np.testing.assert_array_equal(argmax_channel(probs), np.zeros((2, 2), dtype=np.uint8))
    probs = np.zeros((2, 1, 1))
    probs[1] = 1.0
    assert argmax_channel(probs)[0, 0] == 1
    assert argmax_channel(probs).dtype == np.uint8


def test_argmax_channel_rejects_too_many_classes():
    with pytest.raises(ValueError):
        argmax_channel(np.zeros((256, 2, 2)))
