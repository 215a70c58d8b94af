"""PSNR and SSIM."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import gaussian_filter

from dicect.errors import ContractError, DimensionError

PSNR_CAP = 200.0
SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
K1, K2 = 0.01, 0.03

CSV_FIELDS = ("image_id", "method", "views", "pattern", "psnr", "ssim", "seconds")


@dataclass(frozen=True)
class MetricReport:
    psnr: float
    ssim: float
    data_range: float = 1.0


def _pair(ref, test):
    ref = np.asarray(ref, dtype=np.float64)
    test = np.asarray(test, dtype=np.float64)
    if ref.shape != test.shape:
        raise DimensionError(f"image shapes {ref.shape} and {test.shape} differ")
    return ref, test


def psnr(ref, test, data_range=1.0):
    """``10 log10(range^2 / MSE)``, capped at 200 dB for identical images."""
    ref, test = _pair(ref, test)
    if data_range <= 0:
        raise ContractError("data_range must be positive")
    mse = float(np.mean((ref - test) ** 2))
    if mse == 0.0:
        return PSNR_CAP
    return min(PSNR_CAP, 10.0 * np.log10(data_range ** 2 / mse))


def ssim(ref, test, data_range=1.0):
    """Mean SSIM over an 11x11 Gaussian window (sigma 1.5), border windows excluded."""
    ref, test = _pair(ref, test)
    if ref.ndim != 2 or min(ref.shape) < SSIM_WINDOW:
        raise ContractError(f"SSIM needs 2-D images of at least {SSIM_WINDOW}x{SSIM_WINDOW}")
    # truncate=3.5 gives a radius-5 (11-tap) kernel
    blur = lambda a: gaussian_filter(a, SSIM_SIGMA, truncate=3.5, mode="reflect")
    mx, my = blur(ref), blur(test)
    vx = blur(ref * ref) - mx * mx
    vy = blur(test * test) - my * my
    cxy = blur(ref * test) - mx * my
    c1 = (K1 * data_range) ** 2
    c2 = (K2 * data_range) ** 2
    smap = ((2 * mx * my + c1) * (2 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2))
    pad = SSIM_WINDOW // 2
    return float(smap[pad:-pad, pad:-pad].mean())


def evaluate(ref, test, data_range=1.0):
    return MetricReport(psnr(ref, test, data_range), ssim(ref, test, data_range), data_range)


def write_metrics_csv(path, rows):
    """Write dict rows with the ``CSV_FIELDS`` columns."""
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=CSV_FIELDS, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow(row)
