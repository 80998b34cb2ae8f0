"""Image quality metrics: PSNR and single-scale SSIM."""

from __future__ import annotations

import numpy as np

from .errors import ContractError

PSNR_CAP_DB = 99.0


def psnr(a: np.ndarray, b: np.ndarray) -> float:
    """Peak signal-to-noise ratio in dB for images in [0,1]; identical images
    report the 99 dB sentinel."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_CAP_DB
    return min(10.0 * np.log10(1.0 / mse), PSNR_CAP_DB)


def _gaussian_window(size: int = 11, sigma: float = 1.5) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax**2) / (2.0 * sigma**2))
    w = np.outer(g, g)
    return w / w.sum()


def _filter2_valid(img: np.ndarray, win: np.ndarray) -> np.ndarray:
    k = win.shape[0]
    h, w = img.shape
    out = np.zeros((h - k + 1, w - k + 1))
    for i in range(k):
        for j in range(k):
            out += win[i, j] * img[i : i + h - k + 1, j : j + w - k + 1]
    return out


def ssim(a: np.ndarray, b: np.ndarray) -> float:
    """Standard single-scale SSIM (11x11 Gaussian window, sigma 1.5,
    C1=0.01^2, C2=0.03^2), channel-averaged, 'valid' padding."""
    a = np.asarray(a, np.float64)
    b = np.asarray(b, np.float64)
    if a.shape != b.shape:
        raise ContractError(f"shape mismatch: {a.shape} vs {b.shape}")
    if a.ndim == 2:
        a = a[:, :, None]
        b = b[:, :, None]
    if a.shape[0] < 11 or a.shape[1] < 11:
        raise ContractError("images must be at least 11x11 for SSIM")
    win = _gaussian_window()
    c1, c2 = 0.01**2, 0.03**2
    scores = []
    for c in range(a.shape[2]):
        x, y = a[:, :, c], b[:, :, c]
        mx = _filter2_valid(x, win)
        my = _filter2_valid(y, win)
        mxx = _filter2_valid(x * x, win) - mx * mx
        myy = _filter2_valid(y * y, win) - my * my
        mxy = _filter2_valid(x * y, win) - mx * my
        s = ((2 * mx * my + c1) * (2 * mxy + c2)) / ((mx**2 + my**2 + c1) * (mxx + myy + c2))
        scores.append(float(s.mean()))
    return float(np.mean(scores))
