"""Training patch extraction, augmentation and dataset manifests."""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigError, ContractError
from .imaging import ImagePlane, load_image, resize_array

AUGMENT_TAGS = ("identity", "rot90", "rot180", "rot270", "hflip")


@dataclass(frozen=True)
class PatchInfo:
    source: str
    y: int
    x: int
    tag: str = "identity"


@dataclass
class PatchSet:
    """Aligned HR/LR patch stacks, ``[P, H, W, 3]`` in unit range."""

    hr: np.ndarray
    lr: np.ndarray
    info: list[PatchInfo] = field(default_factory=list)
    scale: int = 4

    def __len__(self) -> int:
        return len(self.hr)

    @classmethod
    def empty(cls, size: int = 96, scale: int = 4) -> "PatchSet":
        return cls(np.zeros((0, size, size, 3)), np.zeros((0, size // scale, size // scale, 3)), [], scale)

    @classmethod
    def concat(cls, sets: Sequence["PatchSet"]) -> "PatchSet":
        sets = [s for s in sets if len(s)]
        if not sets:
            return cls.empty()
        return cls(np.concatenate([s.hr for s in sets]), np.concatenate([s.lr for s in sets]),
                   [i for s in sets for i in s.info], sets[0].scale)

    def lr_offset(self, i: int) -> tuple[int, int]:
        info = self.info[i]
        return info.y // self.scale, info.x // self.scale


def augment(patch: np.ndarray, tag: str) -> np.ndarray:
    """Apply one of the dihedral augmentations to an ``[H, W, ...]`` array."""
    if tag == "identity":
        return patch
    if tag == "hflip":
        return patch[:, ::-1]
    if tag in ("rot90", "rot180", "rot270"):
        return np.rot90(patch, k=int(tag[3:]) // 90, axes=(0, 1))
    raise ContractError(f"unknown augmentation tag {tag!r}; expected one of {AUGMENT_TAGS}")


def patch_positions(height: int, width: int, size: int, stride: int) -> list[tuple[int, int]]:
    return [(y, x) for y in range(0, height - size + 1, stride) for x in range(0, width - size + 1, stride)]


def crop_patches(hr_image: ImagePlane, size: int = 96, stride: int = 48, scale: int = 4,
                 source: str = "", antialias: bool = True) -> PatchSet:
    """Crop HR patches on a regular grid and bicubic-degrade each one.

    ``stride`` must be a multiple of ``scale`` so every LR patch sits at
    ``offset / scale`` in the degraded image grid.
    """
    if size % scale:
        raise ConfigError(f"patch size {size} is not a multiple of scale {scale}")
    if stride < 1 or stride % scale:
        raise ConfigError(f"stride {stride} must be a positive multiple of scale {scale}")
    if hr_image.channels != 3:
        raise ContractError("training patches need RGB images")
    img = hr_image.to_range("unit").data
    if img.shape[0] < size or img.shape[1] < size:
        warnings.warn(f"{source or 'image'} ({img.shape[0]}x{img.shape[1]}) is smaller than the "
                      f"{size}px patch size; skipped", stacklevel=2)
        return PatchSet.empty(size, scale)
    pos = patch_positions(img.shape[0], img.shape[1], size, stride)
    hr = np.stack([img[y:y + size, x:x + size] for y, x in pos])
    lr = np.stack([resize_array(p, Fraction(1, scale), antialias=antialias) for p in hr])
    return PatchSet(hr, lr, [PatchInfo(source, y, x) for y, x in pos], scale)


def read_manifest(path: str | Path) -> list[Path]:
    """One image path per line; ``#`` starts a comment, relative paths resolve
    against the manifest's directory."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot read manifest {path}: {exc}") from exc
    out = []
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if line:
            p = Path(line)
            out.append(p if p.is_absolute() else path.parent / p)
    return out


def write_manifest(paths: Iterable[str | Path], path: str | Path, header: str | None = None) -> None:
    lines = [f"# {header}"] if header else []
    lines += [str(p) for p in paths]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def build_patch_set(paths: Sequence[str | Path], size: int = 96, stride: int = 48, scale: int = 4,
                    workers: int = 1) -> PatchSet:
    """Load and crop every image; results keep manifest order whatever ``workers`` is."""
    def one(p):
        return crop_patches(load_image(p), size, stride, scale, source=str(p))

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            sets = list(pool.map(one, paths))
    else:
        sets = [one(p) for p in paths]
    return PatchSet.concat(sets)
