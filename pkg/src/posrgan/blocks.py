"""Residual channel attention block with a shared convolution kernel.

Block layout (``convs_per_block = 2``)::

    x --conv--relu--conv--CA--(+)--> y
    |___________________________|

The two convolutions reuse one weight/bias pair when ``share_parameters``
is set, enlarging the receptive field without adding parameters. ``CA`` is
channel attention: global average pool, a 1x1 conv down to
``max(1, C // reduction)`` channels, ReLU, a 1x1 conv back to ``C``, sigmoid,
and a per-channel rescale of its input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import engine as E
from .engine import Tensor
from .engine.params import scoped
from .errors import DimensionError


@dataclass(frozen=True)
class ChannelAttentionSpec:
    channels: int
    reduction: int = 16

    @property
    def bottleneck(self) -> int:
        return max(1, self.channels // self.reduction)

    def num_parameters(self) -> int:
        c, r = self.channels, self.bottleneck
        return (c * r + r) + (r * c + c)


@dataclass(frozen=True)
class RCABSpec:
    channels: int
    kernel: int = 3
    convs_per_block: int = 2
    share_parameters: bool = True
    use_attention: bool = True
    reduction: int = 16

    def __post_init__(self):
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(f"kernel must be odd and positive, got {self.kernel}")
        if self.channels < 1 or self.convs_per_block < 1:
            raise ValueError("channels and convs_per_block must be positive")

    @property
    def attention(self) -> ChannelAttentionSpec:
        return ChannelAttentionSpec(self.channels, self.reduction)

    @property
    def distinct_convs(self) -> int:
        return 1 if self.share_parameters else self.convs_per_block

    def conv_names(self) -> list[str]:
        if self.share_parameters:
            return ["conv"] * self.convs_per_block
        return [f"conv{i}" for i in range(self.convs_per_block)]

    def num_parameters(self) -> int:
        c, k = self.channels, self.kernel
        total = self.distinct_convs * (k * k * c * c + c)
        if self.use_attention:
            total += self.attention.num_parameters()
        return total


def count_parameters(spec) -> int:
    """Exact number of trainable scalars; a shared kernel is counted once."""
    return spec.num_parameters()


def he_normal(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, init_scale: float = 1.0) -> np.ndarray:
    return rng.standard_normal(shape) * (init_scale * np.sqrt(2.0 / fan_in))


def init_conv(params, name: str, rng: np.random.Generator, cin: int, cout: int, k: int,
              init_scale: float = 1.0) -> None:
    params.add(f"{name}.weight", he_normal(rng, (cout, cin, k, k), cin * k * k, init_scale))
    params.add(f"{name}.bias", np.zeros(cout))


def conv(params: Mapping[str, Tensor], name: str, x: Tensor, stride: int = 1, padding: int | None = None) -> Tensor:
    w = params[f"{name}.weight"]
    if padding is None:
        padding = w.shape[2] // 2
    return E.conv2d(x, w, params[f"{name}.bias"], stride=stride, padding=padding)


def init_channel_attention(spec: ChannelAttentionSpec, params, rng: np.random.Generator,
                           init_scale: float = 1.0) -> None:
    init_conv(params, "down", rng, spec.channels, spec.bottleneck, 1, init_scale)
    init_conv(params, "up", rng, spec.bottleneck, spec.channels, 1, init_scale)


def channel_descriptors(spec: ChannelAttentionSpec, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    """Per-channel gates in (0, 1), shape ``[N, C, 1, 1]``."""
    if x.shape[1] != spec.channels:
        raise DimensionError(
            f"channel attention built for {spec.channels} channels, got input {x.shape}")
    pooled = E.global_avg_pool(x)
    hidden = E.relu(conv(params, "down", pooled, padding=0))
    return E.sigmoid(conv(params, "up", hidden, padding=0))


def channel_attention_forward(spec: ChannelAttentionSpec, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    return E.channel_mul(x, channel_descriptors(spec, x, params))


def init_rcab(spec: RCABSpec, params, rng: np.random.Generator, init_scale: float = 1.0) -> None:
    for name in dict.fromkeys(spec.conv_names()):
        init_conv(params, name, rng, spec.channels, spec.channels, spec.kernel, init_scale)
    if spec.use_attention:
        init_channel_attention(spec.attention, scoped(params, "ca"), rng, init_scale)


def rcab_forward(spec: RCABSpec, x: Tensor, params: Mapping[str, Tensor]) -> Tensor:
    if x.data.ndim != 4 or x.shape[1] != spec.channels:
        raise DimensionError(f"RCAB built for {spec.channels} channels, got input {x.shape}")
    names = spec.conv_names()
    h = conv(params, names[0], x)
    for name in names[1:]:
        h = conv(params, name, E.relu(h))
    if spec.use_attention:
        h = channel_attention_forward(spec.attention, h, scoped(params, "ca"))
    return E.add(x, h)

