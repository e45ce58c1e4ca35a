"""Mixing masks: coverage statistics, determinism, and the pixel selection
contract, each against direct oracles."""

import numpy as np
import pytest

from sslseg.cowmask import (
    generate_cowmask,
    generate_cutmix_mask,
    mask_fraction,
    mix,
    sample_mask_params,
)


def test_cowmask_fraction_tracks_p_per_mask():
    for seed, (sigma, p) in enumerate([(4.0, 0.3), (8.0, 0.5), (16.0, 0.7)]):
        mm = generate_cowmask(seed, 48, 48, sigma, p)
        assert mm.mask.dtype == np.uint8
        assert set(np.unique(mm.mask)) <= {0, 1}
        assert abs(mask_fraction(mm) - p) < 0.01


def test_cowmask_mean_fraction_over_many_masks():
    fracs = [mask_fraction(generate_cowmask(s, 48, 48, 8.0, 0.5)) for s in range(300)]
    assert abs(float(np.mean(fracs)) - 0.5) < 0.01


def test_cowmask_extreme_p_saturates():
    mm = generate_cowmask(0, 48, 48, 8.0, 0.999)
    assert mask_fraction(mm) >= 0.99


def test_cowmask_deterministic_and_sigma_changes_structure():
    a = generate_cowmask(3, 48, 48, 8.0, 0.5)
    b = generate_cowmask(3, 48, 48, 8.0, 0.5)
    np.testing.assert_array_equal(a.mask, b.mask)
    c = generate_cowmask(4, 48, 48, 8.0, 0.5)
    assert not np.array_equal(a.mask, c.mask)
    # larger sigma gives fewer, larger blobs: fewer horizontal transitions
    fine = generate_cowmask(5, 64, 64, 2.0, 0.5)
    coarse = generate_cowmask(5, 64, 64, 16.0, 0.5)
    transitions = lambda m: int(np.abs(np.diff(m.mask.astype(int), axis=1)).sum())
    assert transitions(coarse) < transitions(fine)


def test_cowmask_rejects_bad_params():
    with pytest.raises(ValueError):
        generate_cowmask(0, 48, 48, 0.0, 0.5)
    with pytest.raises(ValueError):
        generate_cowmask(0, 48, 48, 8.0, 0.0)
    with pytest.raises(ValueError):
        generate_cowmask(0, 48, 48, 8.0, 1.0)


def test_cutmix_mask_is_ones_with_one_rectangular_hole():
    for seed in range(5):
        mm = generate_cutmix_mask(seed, 48, 48, 0.5)
        zeros = mm.mask == 0
        rows = np.nonzero(zeros.any(axis=1))[0]
        cols = np.nonzero(zeros.any(axis=0))[0]
        # the zero region is a single solid axis-aligned rectangle
        assert (np.diff(rows) == 1).all() and (np.diff(cols) == 1).all()
        assert zeros[rows[0] : rows[-1] + 1, cols[0] : cols[-1] + 1].all()
        assert zeros.sum() == rows.size * cols.size
        # everything outside it is ones
        assert mm.mask.sum() == mm.mask.size - rows.size * cols.size


def test_cutmix_mean_fraction_near_p():
    fracs = [mask_fraction(generate_cutmix_mask(s, 48, 48, 0.5)) for s in range(500)]
    assert abs(float(np.mean(fracs)) - 0.5) < 0.02


def test_sample_mask_params_ranges_and_log_mean():
    sigmas, ps = [], []
    for seed in range(10000):
        sigma, p = sample_mask_params(seed, 48, 48)
        sigmas.append(sigma)
        ps.append(p)
    sigmas = np.array(sigmas)
    ps = np.array(ps)
    assert sigmas.min() >= 4.0 and sigmas.max() <= 16.0
    assert ps.min() >= 0.3 and ps.max() <= 0.7
    mid = np.log(8.0)  # midpoint of [log 4, log 16]
    assert abs(np.log(sigmas).mean() - mid) < 0.02 * mid
    # sigma scales with the short image side relative to the 48-pixel reference
    s96, _ = sample_mask_params(0, 96, 120)
    s48, _ = sample_mask_params(0, 48, 120)
    assert abs(s96 - 2.0 * s48) < 1e-12


def _random_mix_inputs(rng, h, w):
    x1 = rng.uniform(0, 1, (h, w, 3)).astype(np.float32)
    x2 = rng.uniform(0, 1, (h, w, 3)).astype(np.float32)
    y1 = rng.integers(0, 4, (h, w)).astype(np.uint8)
    y2 = rng.integers(0, 4, (h, w)).astype(np.uint8)
    w1 = rng.uniform(0, 1, (h, w)).astype(np.float32)
    w2 = rng.uniform(0, 1, (h, w)).astype(np.float32)
    return x1, x2, y1, y2, w1, w2


def test_mix_identity_masks():
    rng = np.random.default_rng(0)
    x1, x2, y1, y2, w1, w2 = _random_mix_inputs(rng, 9, 11)
    ones = generate_cowmask(0, 9, 11, 4.0, 0.5)
    ones.mask = np.ones((9, 11), dtype=np.uint8)
    xm, ym, wm = mix(x1, x2, y1, y2, w1, w2, ones)
    np.testing.assert_array_equal(xm, x1)
    np.testing.assert_array_equal(ym, y1)
    np.testing.assert_array_equal(wm, w1)
    ones.mask = np.zeros((9, 11), dtype=np.uint8)
    xm, ym, wm = mix(x1, x2, y1, y2, w1, w2, ones)
    np.testing.assert_array_equal(xm, x2)
    np.testing.assert_array_equal(ym, y2)
    np.testing.assert_array_equal(wm, w2)


def test_mix_matches_per_pixel_oracle_exactly():
    rng = np.random.default_rng(1)
    x1, x2, y1, y2, w1, w2 = _random_mix_inputs(rng, 8, 8)
    mm = generate_cowmask(2, 8, 8, 3.0, 0.5)
    xm, ym, wm = mix(x1, x2, y1, y2, w1, w2, mm)
    ones = 0
    for r in range(8):
        for c in range(8):
            src = (x1, y1, w1) if mm.mask[r, c] else (x2, y2, w2)
            assert (xm[r, c] == src[0][r, c]).all()
            assert ym[r, c] == src[1][r, c]
            assert wm[r, c] == src[2][r, c]
            ones += int(mm.mask[r, c])
    # the fraction of pixels taken from source 1 equals the mask fraction exactly
    from_x1 = (xm == x1).all(axis=2) & ~(xm == x2).all(axis=2)
    assert mask_fraction(mm) == ones / 64.0


def test_mix_rejects_mismatched_or_nonbinary_inputs():
    rng = np.random.default_rng(3)
    x1, x2, y1, y2, w1, w2 = _random_mix_inputs(rng, 6, 6)
    mm = generate_cowmask(0, 6, 6, 3.0, 0.5)
    with pytest.raises(ValueError):
        mix(x1[:5], x2, y1, y2, w1, w2, mm)
    with pytest.raises(ValueError):
        mix(x1, x2, y1[:5], y2, w1, w2, mm)
    with pytest.raises(ValueError):
        mix(x1, x2, y1, y2, w1[:5], w2, mm)
    bad = generate_cowmask(0, 6, 6, 3.0, 0.5)
    bad.mask = bad.mask.astype(np.uint8) * 2
    with pytest.raises(ValueError):
        mix(x1, x2, y1, y2, w1, w2, bad)
