import numpy as np
import pytest

from sslseg.data import IGNORE
from sslseg.losses import SceConfig, cross_entropy, pseudolabel_weights, weighted_sce
from fdcheck import fd_gradient, rel_error


def _softmax(logits):
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return e / e.sum(axis=0, keepdims=True)


def _random_case(rng, k=4, h=5, w=6):
    logits = rng.standard_normal((k, h, w))
    probs = _softmax(logits)
    labels = rng.integers(0, k, size=(h, w)).astype(np.uint8)
    weights = rng.random((h, w))
    return logits, probs, labels, weights


def test_sce_hand_value_single_pixel():
    # K=2, p=(0.8, 0.2), label 0, alpha=2, beta=1, clamp=-4:
    #   2*(-log 0.8) + 1*(-(-4))*(1 - 0.8) = 0.44629 + 0.8 = 1.24629
    probs = np.array([[[0.8]], [[0.2]]])
    labels = np.zeros((1, 1), dtype=np.uint8)
    weights = np.ones((1, 1))
    loss, _ = weighted_sce(probs, labels, weights, SceConfig(2.0, 1.0, -4.0))
    assert loss == pytest.approx(1.24629, abs=1e-5)


def test_sce_one_hot_correct_prediction_is_zero_loss():
    probs = np.zeros((3, 2, 2))
    probs[1] = 1.0
    labels = np.full((2, 2), 1, dtype=np.uint8)
    loss, grad = weighted_sce(probs, labels, np.ones((2, 2)), SceConfig(2.0, 1.0, -4.0))
    assert loss == pytest.approx(0.0, abs=1e-9)


def test_beta_zero_unit_weights_reduce_to_alpha_times_ce():
    rng = np.random.default_rng(0)
    _, probs, labels, _ = _random_case(rng)
    ones = np.ones(labels.shape)
    loss_ce, grad_ce = cross_entropy(probs, labels)
    for alpha in (1.0, 2.0, 4.0):
        # powers of two scale without rounding, so equality is bitwise
        loss_a, grad_a = weighted_sce(probs, labels, ones, SceConfig(alpha, 0.0, -4.0))
        assert loss_a == alpha * loss_ce
        assert np.array_equal(grad_a, alpha * grad_ce)
    loss_a, grad_a = weighted_sce(probs, labels, ones, SceConfig(3.5, 0.0, -4.0))
    assert loss_a == 3.5 * loss_ce
    assert np.allclose(grad_a, 3.5 * grad_ce, rtol=1e-14, atol=0)


def test_uniform_prediction_ce_is_log_k():
    k = 4
    probs = np.full((k, 3, 3), 1.0 / k)
    labels = np.zeros((3, 3), dtype=np.uint8)
    loss, _ = cross_entropy(probs, labels)
    assert loss == pytest.approx(np.log(k), rel=1e-12)


def test_gradient_matches_finite_differences_wrt_logits():
    rng = np.random.default_rng(42)
    for trial in range(4):
        logits, _, labels, weights = _random_case(rng)
        labels[0, 0] = IGNORE
        weights[1, 1] = 0.0
        cfg = SceConfig(2.0, 1.0, -4.0) if trial % 2 else SceConfig(1.0, 0.0, -1.0)

        def loss_fn():
            loss, _ = weighted_sce(_softmax(logits), labels, weights, cfg)
            return loss

        _, grad = weighted_sce(_softmax(logits), labels, weights, cfg)
        fd = fd_gradient(loss_fn, logits)
        assert rel_error(grad, fd) < 1e-7


def test_ignore_and_zero_weight_pixels_do_not_contribute():
    rng = np.random.default_rng(1)
    _, probs, labels, weights = _random_case(rng)
    cfg = SceConfig(2.0, 1.0, -4.0)
    base_loss, base_grad = weighted_sce(probs, labels, weights, cfg)

    # knocking a pixel out via IGNORE or w=0 must equal physically removing it
    for knock in ("ignore", "weight"):
        labels2 = labels.copy()
        weights2 = weights.copy()
        if knock == "ignore":
            labels2[2, 3] = IGNORE
        else:
            weights2[2, 3] = 0.0
        loss2, grad2 = weighted_sce(probs, labels2, weights2, cfg)
        keep = np.ones(labels.shape, bool)
        keep[2, 3] = False
        flat_probs = probs[:, keep][:, None, :]
        ref_loss, _ = weighted_sce(flat_probs, labels[keep][None, :], weights[keep][None, :], cfg)
        assert loss2 == pytest.approx(ref_loss, rel=1e-12)
        assert not grad2[:, 2, 3].any()


def test_all_pixels_excluded_gives_zero_loss_and_grad():
    probs = np.full((2, 2, 2), 0.5)
    labels = np.full((2, 2), IGNORE, dtype=np.uint8)
    loss, grad = weighted_sce(probs, labels, np.ones((2, 2)), SceConfig(2.0, 1.0, -4.0))
    assert loss == 0.0
    assert not grad.any()


def test_sce_config_validation():
    with pytest.raises(ValueError):
        SceConfig(0.0, 1.0, -4.0)
    with pytest.raises(ValueError):
        SceConfig(2.0, -0.5, -4.0)
    with pytest.raises(ValueError):
        SceConfig(2.0, 1.0, 0.0)


def test_loss_input_validation():
    probs = np.full((2, 2, 2), 0.5)
    good = np.zeros((2, 2), dtype=np.uint8)
    with pytest.raises(ValueError):
        weighted_sce(probs[0], good, np.ones((2, 2)), SceConfig(2.0, 1.0, -4.0))
    bad = np.full((2, 2), 7, dtype=np.uint8)  # label out of range, not IGNORE
    with pytest.raises(ValueError):
        weighted_sce(probs, bad, np.ones((2, 2)), SceConfig(2.0, 1.0, -4.0))
    nan_probs = probs.copy()
    nan_probs[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        weighted_sce(nan_probs, good, np.ones((2, 2)), SceConfig(2.0, 1.0, -4.0))


def test_pseudolabel_weights_pick_probability_at_label():
    rng = np.random.default_rng(3)
    _, probs, labels, _ = _random_case(rng, k=3, h=4, w=4)
    valid = np.ones(labels.shape, bool)
    valid[0, 0] = False
    labels[1, 1] = IGNORE
    w = pseudolabel_weights(probs, labels, valid)
    assert w[0, 0] == 0.0 and w[1, 1] == 0.0
    for i in range(4):
        for j in range(4):
            if valid[i, j] and labels[i, j] != IGNORE:
                assert w[i, j] == probs[labels[i, j], i, j]
