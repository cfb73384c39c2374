"""Distortion metrics under the usual super-resolution evaluation protocol.

PSNR and SSIM are normally computed on the BT.601 luma channel after a
border crop. RMSE follows the perception-distortion challenge convention
instead: byte-range RGB with a fixed 4-pixel crop. The two protocols differ
on purpose, and each metric keeps its own.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, DimensionError
from .imaging import ImagePlane, extract_y

PSNR_CAP = 100.0
"""Value written to reports for identical images; ``psnr`` itself returns ``inf``."""

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1, SSIM_K2 = 0.01, 0.03
PIRM_BORDER = 4
REGION_BOUNDS = (11.5, 12.5, 16.0)
OUT_OF_RANGE = "out_of_range"


def _prepare(a: ImagePlane, b: ImagePlane, border: int, y_only: bool) -> tuple[np.ndarray, np.ndarray, float]:
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionError(f"image sizes differ: {a.height}x{a.width} vs {b.height}x{b.width}")
    if border < 0 or 2 * border >= min(a.height, a.width):
        raise ContractError(f"border {border} leaves nothing of a {a.height}x{a.width} image")
    b = b.to_range(a.value_range)
    if y_only:
        a, b = extract_y(a), extract_y(b)
    elif a.channels != b.channels:
        raise DimensionError(f"channel counts differ: {a.channels} vs {b.channels}")
    a, b = a.crop_border(border), b.crop_border(border)
    return a.data, b.data, a.peak


def psnr(a: ImagePlane, b: ImagePlane, border: int = 4, y_only: bool = True) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` when the cropped planes agree exactly."""
    x, y, peak = _prepare(a, b, border, y_only)
    mse = float(np.mean((x - y) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    r = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(r * r) / (2.0 * sigma * sigma))
    w = np.outer(g, g)
    return w / w.sum()


def _local_mean(x: np.ndarray, window: np.ndarray) -> np.ndarray:
    views = sliding_window_view(x, window.shape)
    return np.einsum("ijkl,kl->ij", views, window)


def _ssim_plane(x: np.ndarray, y: np.ndarray, peak: float, window: np.ndarray) -> float:
    c1 = (SSIM_K1 * peak) ** 2
    c2 = (SSIM_K2 * peak) ** 2
    mx, my = _local_mean(x, window), _local_mean(y, window)
    sxx = _local_mean(x * x, window) - mx * mx
    syy = _local_mean(y * y, window) - my * my
    sxy = _local_mean(x * y, window) - mx * my
    num = (2 * mx * my + c1) * (2 * sxy + c2)
    den = (mx * mx + my * my + c1) * (sxx + syy + c2)
    return float(np.mean(num / den))


def ssim(a: ImagePlane, b: ImagePlane, border: int = 4, y_only: bool = True) -> float:
    """Single-scale SSIM with an 11x11 Gaussian window, averaged over valid
    window positions (and over channels for RGB input)."""
    x, y, peak = _prepare(a, b, border, y_only)
    if min(x.shape[:2]) < SSIM_WINDOW:
        raise ContractError(f"SSIM needs at least {SSIM_WINDOW}x{SSIM_WINDOW} pixels after cropping")
    window = gaussian_window()
    return float(np.mean([_ssim_plane(x[:, :, c], y[:, :, c], peak, window) for c in range(x.shape[2])]))


def rmse_pirm(a: ImagePlane, b: ImagePlane) -> float:
    """Root-mean-square error on byte-range RGB after a 4-pixel border crop."""
    if (a.height, a.width) != (b.height, b.width) or a.channels != b.channels:
        raise DimensionError(f"image shapes differ: {a.data.shape} vs {b.data.shape}")
    x, y, _ = _prepare(a.to_range("byte"), b.to_range("byte"), PIRM_BORDER, y_only=False)
    return math.sqrt(float(np.mean((x - y) ** 2)))


def classify_region(rmse: float) -> int | str:
    """Map an RMSE to perception-distortion region 1, 2 or 3 (upper bounds inclusive)."""
    if not rmse >= 0:
        raise ContractError(f"rmse must be a nonnegative number, got {rmse}")
    for region, bound in enumerate(REGION_BOUNDS, start=1):
        if rmse <= bound:
            return region
    return OUT_OF_RANGE


@dataclass
class MetricRow:
    image: str
    psnr: float
    ssim: float
    rmse: float
    region: int | str

    def report_psnr(self) -> float:
        return min(self.psnr, PSNR_CAP)


def measure(name: str, sr: ImagePlane, hr: ImagePlane, border: int = 4, y_only: bool = True) -> MetricRow:
    r = rmse_pirm(sr, hr)
    return MetricRow(name, psnr(sr, hr, border, y_only), ssim(sr, hr, border, y_only), r, classify_region(r))


REPORT_COLUMNS = ("image", "psnr", "ssim", "rmse", "region")


def write_report(rows: Iterable[MetricRow], path: str | Path) -> Path:
    """CSV with one row per image; identical pairs report ``PSNR_CAP``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in rows:
            d = asdict(row)
            d["psnr"] = f"{row.report_psnr():.6f}"
            d["ssim"] = f"{row.ssim:.8f}"
            d["rmse"] = f"{row.rmse:.6f}"
            writer.writerow(d)
    return path


def read_report(path: str | Path) -> list[dict[str, str]]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))
