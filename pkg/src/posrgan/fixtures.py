"""Deterministic synthetic images for smoke runs, demos and tests.

The images are sums of a few low-frequency sinusoids per channel, rescaled
into [0.1, 0.9]. They are smooth enough that a tiny generator can fit them
closely, which makes them a good stand-in for real photographs when the
goal is to exercise the training loop rather than to learn natural-image
statistics.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .imaging import ImagePlane, resize_array
from .patches import PatchInfo, PatchSet


def smooth_image(rng: np.random.Generator, height: int, width: int | None = None, waves: int = 4,
                 max_freq: float = 2.0) -> np.ndarray:
    """``[H, W, 3]`` unit-range image built from ``waves`` random plane waves per channel."""
    width = height if width is None else width
    yy, xx = np.mgrid[0:height, 0:width]
    yy, xx = yy / height, xx / width
    img = np.zeros((height, width, 3))
    for c in range(3):
        for _ in range(waves):
            fx, fy = rng.uniform(-max_freq, max_freq, 2)
            phase = rng.uniform(0, 2 * np.pi)
            amp = rng.uniform(0.3, 1.0)
            img[:, :, c] += amp * np.sin(2 * np.pi * (fx * xx + fy * yy) + phase)
    img -= img.min()
    img /= max(img.max(), 1e-12)
    return 0.1 + 0.8 * img


def smooth_patch_set(count: int = 8, size: int = 96, scale: int = 4, seed: int = 0,
                     max_freq: float = 2.0) -> PatchSet:
    """``count`` independent smooth HR patches with their bicubic LR partners."""
    rng = np.random.default_rng(seed)
    hr = np.stack([smooth_image(rng, size, max_freq=max_freq) for _ in range(count)])
    lr = np.stack([resize_array(h, Fraction(1, scale)) for h in hr])
    info = [PatchInfo(f"synthetic:{seed}:{i}", 0, 0) for i in range(count)]
    return PatchSet(hr, lr, info, scale)


def smooth_plane(seed: int, height: int, width: int | None = None, value_range: str = "unit") -> ImagePlane:
    img = ImagePlane(smooth_image(np.random.default_rng(seed), height, width))
    return img.to_range(value_range)
