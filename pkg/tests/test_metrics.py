"""PSNR/SSIM against naive double-loop reference implementations."""

from __future__ import annotations

import math

import numpy as np
import pytest

from panosplat.errors import ContractError
from panosplat.metrics import PSNR_CAP_DB, psnr, ssim


def _naive_psnr(a, b):
    total = 0.0
    count = 0
    flat_a = np.asarray(a, np.float64).ravel()
    flat_b = np.asarray(b, np.float64).ravel()
    for x, y in zip(flat_a, flat_b):
        total += (x - y) ** 2
        count += 1
    mse = total / count
    if mse == 0:
        return 99.0
    return 10.0 * math.log10(1.0 / mse)


def _naive_ssim(a, b):
    """Direct per-window implementation of the standard single-scale SSIM."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    ax = np.arange(11) - 5.0
    g = np.exp(-(ax**2) / (2 * 1.5**2))
    win = np.outer(g, g)
    win /= win.sum()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for c in range(a.shape[2]):
        vals = []
        for i in range(a.shape[0] - 10):
            for j in range(a.shape[1] - 10):
                x = a[i : i + 11, j : j + 11, c]
                y = b[i : i + 11, j : j + 11, c]
                mx = (win * x).sum()
                my = (win * y).sum()
                vx = (win * x * x).sum() - mx * mx
                vy = (win * y * y).sum() - my * my
                vxy = (win * x * y).sum() - mx * my
                vals.append(
                    ((2 * mx * my + c1) * (2 * vxy + c2))
                    / ((mx**2 + my**2 + c1) * (vx + vy + c2))
                )
        scores.append(np.mean(vals))
    return float(np.mean(scores))


def test_psnr_identical_hits_sentinel():
    img = np.linspace(0, 1, 48).reshape(4, 4, 3)
    assert psnr(img, img) == PSNR_CAP_DB == 99.0


def test_psnr_uniform_half_error():
    a = np.zeros((8, 8, 3))
    b = np.full((8, 8, 3), 0.5)
    assert abs(psnr(a, b) - 10.0 * math.log10(1.0 / 0.25)) < 1e-12


def test_psnr_matches_naive_reference(rng):
    a = rng.uniform(size=(13, 17, 3))
    b = rng.uniform(size=(13, 17, 3))
    assert abs(psnr(a, b) - _naive_psnr(a, b)) < 1e-9


def test_psnr_shape_mismatch():
    with pytest.raises(ContractError):
        psnr(np.zeros((4, 4)), np.zeros((4, 5)))


def test_ssim_identical_is_one():
    img = np.linspace(0, 1, 16 * 16 * 3).reshape(16, 16, 3)
    assert abs(ssim(img, img) - 1.0) < 1e-12


def test_ssim_constant_images_closed_form():
    """a=0, b=1: all variances vanish, means 0 and 1, so every window scores
    (C1 * C2) / ((1 + C1) * C2) = C1 / (1 + C1)."""
    a = np.zeros((16, 16, 3))
    b = np.ones((16, 16, 3))
    c1 = 0.01**2
    want = c1 / (1.0 + c1)
    assert abs(ssim(a, b) - want) < 1e-12


def test_ssim_matches_naive_reference(rng):
    a = rng.uniform(size=(15, 18, 3))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert abs(ssim(a, b) - _naive_ssim(a, b)) < 1e-9


def test_ssim_grayscale_matches_naive_reference(rng):
    a = rng.uniform(size=(14, 14))
    b = rng.uniform(size=(14, 14))
    assert abs(ssim(a, b) - _naive_ssim(a[:, :, None], b[:, :, None])) < 1e-9


def test_ssim_too_small_raises():
    with pytest.raises(ContractError):
        ssim(np.zeros((8, 8, 3)), np.zeros((8, 8, 3)))
    with pytest.raises(ContractError):
        ssim(np.zeros((12, 12, 3)), np.zeros((12, 13, 3)))
