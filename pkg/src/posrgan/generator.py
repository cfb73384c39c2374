"""Super-resolution generator: head conv, RCAB cascade, global skip, sub-pixel upsampling."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import engine as E
from .blocks import RCABSpec, conv, init_conv, init_rcab, rcab_forward
from .engine import ParameterStore, Tensor
from .engine.params import scoped
from .errors import ContractError, DimensionError

IMAGE_CHANNELS = 3


@dataclass(frozen=True)
class GeneratorSpec:
    num_blocks: int = 128
    channels: int = 64
    scale: int = 4
    block: RCABSpec = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.block is None:
            object.__setattr__(self, "block", RCABSpec(self.channels))
        if self.block.channels != self.channels:
            raise ValueError(f"block spec has {self.block.channels} channels, generator has {self.channels}")
        if self.scale < 1 or self.scale & (self.scale - 1):
            raise ValueError(f"scale must be a power of two, got {self.scale}")
        if self.num_blocks < 0:
            raise ValueError("num_blocks must be nonnegative")

    @classmethod
    def variant(cls, num_blocks: int, channels: int, *, share: bool = True, attention: bool = True,
                scale: int = 4) -> "GeneratorSpec":
        return cls(num_blocks, channels, scale,
                   RCABSpec(channels, share_parameters=share, use_attention=attention))

    @property
    def upsample_stages(self) -> int:
        return int(math.log2(self.scale))

    def num_parameters(self) -> int:
        c, k = self.channels, self.block.kernel
        head = k * k * IMAGE_CHANNELS * c + c
        tail = k * k * c * c + c
        up = self.upsample_stages * (k * k * c * 4 * c + 4 * c)
        final = k * k * c * IMAGE_CHANNELS + IMAGE_CHANNELS
        return head + self.num_blocks * self.block.num_parameters() + tail + up + final

    def to_dict(self) -> dict:
        b = self.block
        return {"num_blocks": self.num_blocks, "channels": self.channels, "scale": self.scale,
                "kernel": b.kernel, "convs_per_block": b.convs_per_block,
                "share_parameters": b.share_parameters, "use_attention": b.use_attention,
                "reduction": b.reduction}

    @classmethod
    def from_dict(cls, d: Mapping) -> "GeneratorSpec":
        block = RCABSpec(int(d["channels"]), kernel=int(d.get("kernel", 3)),
                         convs_per_block=int(d.get("convs_per_block", 2)),
                         share_parameters=bool(d.get("share_parameters", True)),
                         use_attention=bool(d.get("use_attention", True)),
                         reduction=int(d.get("reduction", 16)))
        return cls(int(d["num_blocks"]), int(d["channels"]), int(d.get("scale", 4)), block)


def build_generator(spec: GeneratorSpec, seed: int = 0, init_scale: float = 1.0) -> ParameterStore:
    """Fan-in scaled Gaussian weights and zero biases, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    params = ParameterStore()
    c, k = spec.channels, spec.block.kernel
    init_conv(params, "head", rng, IMAGE_CHANNELS, c, k, init_scale)
    for i in range(spec.num_blocks):
        init_rcab(spec.block, scoped(params, f"blocks.{i}"), rng, init_scale)
    init_conv(params, "tail", rng, c, c, k, init_scale)
    for s in range(spec.upsample_stages):
        init_conv(params, f"up.{s}", rng, c, 4 * c, k, init_scale)
    init_conv(params, "final", rng, c, IMAGE_CHANNELS, k, init_scale)
    return params


def gposr_forward(spec: GeneratorSpec, params: Mapping[str, Tensor], lr_image: Tensor) -> Tensor:
    """Map ``[N, 3, H, W]`` to ``[N, 3, scale*H, scale*W]``; output is not clipped."""
    if lr_image.data.ndim != 4 or lr_image.shape[1] != IMAGE_CHANNELS:
        raise DimensionError(f"generator expects [N, 3, H, W], got {lr_image.shape}")
    if not np.isfinite(lr_image.data).all():
        raise ContractError("generator input contains NaN or Inf")
    head = conv(params, "head", lr_image)
    h = head
    for i in range(spec.num_blocks):
        h = rcab_forward(spec.block, h, scoped(params, f"blocks.{i}"))
    h = E.add(conv(params, "tail", h), head)
    for s in range(spec.upsample_stages):
        h = E.pixel_shuffle(conv(params, f"up.{s}", h), 2)
    return conv(params, "final", h)


class Generator:
    """Spec plus parameters, callable on LR batches."""

    def __init__(self, spec: GeneratorSpec, params: ParameterStore | None = None, seed: int = 0,
                 init_scale: float = 1.0):
        self.spec = spec
        self.params = params if params is not None else build_generator(spec, seed, init_scale)

    def __call__(self, lr_image: Tensor, params: Mapping[str, Tensor] | None = None) -> Tensor:
        return gposr_forward(self.spec, self.params if params is None else params, lr_image)
