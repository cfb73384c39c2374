"""Images as float planes: PNG I/O, YCbCr conversion and MATLAB-style bicubic resizing."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import ContractError, DimensionError

RANGES = {"unit": 1.0, "byte": 255.0}
SPACES = ("RGB", "YCbCr", "Y")

# BT.601 studio swing on [0, 1] inputs, results in byte units (MATLAB rgb2ycbcr).
_YCBCR_STUDIO = np.array([
    [65.481, 128.553, 24.966],
    [-37.797, -74.203, 112.0],
    [112.0, -93.786, -18.214],
])
_YCBCR_STUDIO_OFFSET = np.array([16.0, 128.0, 128.0])
# Full-swing (JPEG) variant, also in byte units.
_YCBCR_FULL = np.array([
    [0.299, 0.587, 0.114],
    [-0.168736, -0.331264, 0.5],
    [0.5, -0.418688, -0.081312],
]) * 255.0
_YCBCR_FULL_OFFSET = np.array([0.0, 128.0, 128.0])


@dataclass(frozen=True)
class ImagePlane:
    """``[H, W, C]`` float image with explicit value range and color space."""

    data: np.ndarray
    value_range: str = "unit"
    space: str = "RGB"

    def __post_init__(self):
        arr = np.asarray(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise DimensionError(f"image data must be [H, W, 1|3], got {np.shape(self.data)}")
        if self.value_range not in RANGES:
            raise ContractError(f"unknown value range {self.value_range!r}")
        if self.space not in SPACES:
            raise ContractError(f"unknown color space {self.space!r}")
        if (self.space == "Y") != (arr.shape[2] == 1):
            raise ContractError(f"space {self.space} does not match {arr.shape[2]} channel(s)")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def peak(self) -> float:
        return RANGES[self.value_range]

    def to_range(self, value_range: str) -> "ImagePlane":
        if value_range == self.value_range:
            return self
        factor = RANGES[value_range] / RANGES[self.value_range]
        return replace(self, data=self.data * factor, value_range=value_range)

    def clipped(self) -> "ImagePlane":
        return replace(self, data=np.clip(self.data, 0.0, self.peak))

    def crop_border(self, border: int) -> "ImagePlane":
        if border == 0:
            return self
        return replace(self, data=self.data[border:-border, border:-border])


def load_image(path: str | Path) -> ImagePlane:
    """Read an 8-bit PNG (RGB or grayscale) as a byte-range plane."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = "L" if im.mode in ("L", "I;16", "I", "1") else "RGB"
            arr = np.asarray(im.convert(mode), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise OSError(f"cannot read image {path}: {exc}") from exc
    if mode == "L":
        return ImagePlane(arr, "byte", "Y")
    return ImagePlane(arr, "byte", "RGB")


def to_uint8(img: ImagePlane) -> np.ndarray:
    byte = img.to_range("byte").data
    return np.clip(np.round(byte), 0, 255).astype(np.uint8)


def save_image(img: ImagePlane, path: str | Path) -> None:
    """Write an 8-bit PNG; values are clipped to the plane's range first."""
    if img.space == "YCbCr":
        raise ContractError("convert YCbCr planes back to RGB before saving")
    arr = to_uint8(img)
    pil = Image.fromarray(arr[:, :, 0] if img.channels == 1 else arr, mode="L" if img.channels == 1 else "RGB")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    pil.save(path, format="PNG")


def rgb_to_ycbcr(img: ImagePlane, full_swing: bool = False) -> ImagePlane:
    """BT.601 conversion; studio swing puts Y in [16, 235] for byte-range input."""
    if img.space != "RGB" or img.channels != 3:
        raise ContractError(f"rgb_to_ycbcr needs a 3-channel RGB plane, got {img.space}/{img.channels}")
    unit = img.data / img.peak
    matrix, offset = (_YCBCR_FULL, _YCBCR_FULL_OFFSET) if full_swing else (_YCBCR_STUDIO, _YCBCR_STUDIO_OFFSET)
    ycc = unit @ matrix.T + offset
    return ImagePlane(ycc * (img.peak / 255.0), img.value_range, "YCbCr")


def extract_y(img: ImagePlane, full_swing: bool = False) -> ImagePlane:
    if img.space == "Y":
        return img
    if img.space == "RGB":
        img = rgb_to_ycbcr(img, full_swing)
    return ImagePlane(img.data[:, :, :1], img.value_range, "Y")


def cubic(x: np.ndarray) -> np.ndarray:
    """Keys cubic convolution kernel with a = -0.5."""
    ax = np.abs(x)
    ax2, ax3 = ax * ax, ax * ax * ax
    return ((1.5 * ax3 - 2.5 * ax2 + 1.0) * (ax <= 1)
            + (-0.5 * ax3 + 2.5 * ax2 - 4.0 * ax + 2.0) * ((ax > 1) & (ax <= 2)))


def contributions(in_len: int, out_len: int, scale: float, antialias: bool = True):
    """Tap indices (0-based) and weights per output sample, MATLAB ``imresize`` style.

    Returns ``(indices, weights)`` of shape ``[out_len, taps]``. Indices past
    either edge are mirrored (symmetric padding); weights of each row sum to 1.
    """
    width = 4.0
    if scale < 1 and antialias:
        kernel = lambda t: scale * cubic(scale * t)  # noqa: E731
        width = width / scale
    else:
        kernel = cubic
    x = np.arange(1, out_len + 1, dtype=np.float64)
    u = x / scale + 0.5 * (1.0 - 1.0 / scale)
    left = np.floor(u - width / 2.0)
    taps = int(math.ceil(width)) + 2
    idx = left[:, None] + np.arange(taps)[None, :]
    weights = kernel(u[:, None] - idx)
    weights = weights / weights.sum(axis=1, keepdims=True)
    mirror = np.concatenate([np.arange(in_len), np.arange(in_len - 1, -1, -1)])
    idx = mirror[np.mod(idx.astype(np.int64) - 1, 2 * in_len)]
    keep = np.any(weights != 0, axis=0)
    return idx[:, keep], weights[:, keep]


def _resize_axis(arr: np.ndarray, axis: int, out_len: int, scale: float, antialias: bool) -> np.ndarray:
    idx, w = contributions(arr.shape[axis], out_len, scale, antialias)
    moved = np.moveaxis(arr, axis, 0)
    gathered = moved[idx]  # [out, taps, ...]
    w = w.reshape(w.shape + (1,) * (moved.ndim - 1))
    return np.moveaxis((gathered * w).sum(axis=1), 0, axis)


def resize_array(arr: np.ndarray, scale: float | Fraction | None = None,
                 output_shape: tuple[int, int] | None = None, antialias: bool = True) -> np.ndarray:
    """Bicubic resize of the first two axes of ``arr``.

    Give either ``scale`` (output extent ``ceil(scale * input)``) or an
    explicit ``output_shape``.
    """
    arr = np.asarray(arr, dtype=np.float64)
    h, w = arr.shape[:2]
    if output_shape is None:
        if scale is None or scale <= 0:
            raise ContractError(f"resize scale must be positive, got {scale}")
        s = float(scale)
        out_h, out_w = math.ceil(h * s - 1e-9), math.ceil(w * s - 1e-9)
        sh = sw = s
    else:
        out_h, out_w = output_shape
        if out_h <= 0 or out_w <= 0:
            raise ContractError(f"resize target {output_shape} must be positive")
        sh, sw = (float(scale), float(scale)) if scale is not None else (out_h / h, out_w / w)
    if out_h <= 0 or out_w <= 0:
        raise ContractError(f"resize of {h}x{w} by {scale} gives an empty image")
    if (out_h, out_w) == (h, w) and sh == sw == 1.0:
        return arr.copy()
    # narrower scale first, as MATLAB does
    order = [(0, out_h, sh), (1, out_w, sw)]
    if sw < sh:
        order.reverse()
    for axis, n, s in order:
        arr = _resize_axis(arr, axis, n, s, antialias)
    return arr


def bicubic_resize(img: ImagePlane, scale: float | Fraction, antialias: bool = True) -> ImagePlane:
    return replace(img, data=resize_array(img.data, scale, antialias=antialias))


def degrade(hr: ImagePlane, scale: int = 4, antialias: bool = True) -> ImagePlane:
    """Bicubic downscale by an integer factor after cropping to a multiple of it."""
    h, w = hr.height - hr.height % scale, hr.width - hr.width % scale
    if h == 0 or w == 0:
        raise ContractError(f"image {hr.height}x{hr.width} smaller than scale {scale}")
    cropped = replace(hr, data=hr.data[:h, :w])
    return replace(cropped, data=resize_array(cropped.data, Fraction(1, scale), antialias=antialias))


def modcrop(img: ImagePlane, scale: int) -> ImagePlane:
    h, w = img.height - img.height % scale, img.width - img.width % scale
    return replace(img, data=img.data[:h, :w])
