"""Pixel- and feature-domain critics, the frozen feature extractor, and the
relativistic-average criterion that compares a score against the opposing
batch mean.

Critic body: a head conv, then ``num_blocks`` conv + LeakyReLU(0.2) blocks.
Odd-numbered blocks use stride 2, and each stride-2 block doubles the width
(capped at ``max_channels``). The pixel critic ends in two dense layers;
the feature critic ends in two 1x1 convs and a global average, so it
accepts any feature-map size.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from . import engine as E
from .blocks import conv, he_normal, init_conv
from .engine import ParameterStore, Tensor
from .engine.conv import output_size
from .errors import ContractError, DimensionError

PIXEL, FEATURE = "pixel", "feature"
FC_HEAD, CONV_HEAD = "fully_connected", "fully_convolutional"


@dataclass(frozen=True)
class DiscriminatorSpec:
    kind: str = PIXEL
    base_channels: int = 64
    num_blocks: int = 8
    head: str = FC_HEAD
    in_channels: int = 3
    input_size: int = 96
    max_channels: int = 512
    fc_hidden: int = 1024
    negative_slope: float = 0.2
    kernel: int = 3

    def __post_init__(self):
        if self.kind not in (PIXEL, FEATURE):
            raise ValueError(f"unknown discriminator kind {self.kind!r}")
        if self.head not in (FC_HEAD, CONV_HEAD):
            raise ValueError(f"unknown discriminator head {self.head!r}")

    @classmethod
    def pixel(cls, base_channels: int = 64, input_size: int = 96, **kw) -> "DiscriminatorSpec":
        return cls(PIXEL, base_channels, kw.pop("num_blocks", 8), FC_HEAD, 3, input_size, **kw)

    @classmethod
    def feature(cls, in_channels: int, base_channels: int = 64, **kw) -> "DiscriminatorSpec":
        return cls(FEATURE, base_channels, kw.pop("num_blocks", 7), CONV_HEAD, in_channels,
                   kw.pop("input_size", 0), **kw)

    def block_layout(self) -> list[tuple[int, int, int]]:
        """``(in_channels, out_channels, stride)`` per body block."""
        layout, c = [], self.base_channels
        for i in range(self.num_blocks):
            stride = 2 if i % 2 == 1 else 1
            out = min(self.max_channels, self.base_channels * 2 ** ((i + 1) // 2))
            layout.append((c, out, stride))
            c = out
        return layout

    @property
    def out_channels(self) -> int:
        layout = self.block_layout()
        return layout[-1][1] if layout else self.base_channels

    def body_size(self, size: int) -> int:
        for _, _, stride in self.block_layout():
            size = output_size(size, self.kernel, stride, self.kernel // 2)
        return size

    def num_parameters(self) -> int:
        k = self.kernel
        total = k * k * self.in_channels * self.base_channels + self.base_channels
        for cin, cout, _ in self.block_layout():
            total += k * k * cin * cout + cout
        c = self.out_channels
        if self.head == FC_HEAD:
            flat = c * self.body_size(self.input_size) ** 2
            total += flat * self.fc_hidden + self.fc_hidden + self.fc_hidden + 1
        else:
            total += c * c + c + c + 1
        return total

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def build_discriminator(spec: DiscriminatorSpec, seed: int = 0, init_scale: float = 1.0) -> ParameterStore:
    rng = np.random.default_rng(seed)
    params = ParameterStore()
    init_conv(params, "head", rng, spec.in_channels, spec.base_channels, spec.kernel, init_scale)
    for i, (cin, cout, _) in enumerate(spec.block_layout()):
        init_conv(params, f"blocks.{i}", rng, cin, cout, spec.kernel, init_scale)
    c = spec.out_channels
    if spec.head == FC_HEAD:
        flat = c * spec.body_size(spec.input_size) ** 2
        params.add("fc1.weight", he_normal(rng, (spec.fc_hidden, flat), flat, init_scale))
        params.add("fc1.bias", np.zeros(spec.fc_hidden))
        params.add("fc2.weight", he_normal(rng, (1, spec.fc_hidden), spec.fc_hidden, init_scale))
        params.add("fc2.bias", np.zeros(1))
    else:
        init_conv(params, "cls1", rng, c, c, 1, init_scale)
        init_conv(params, "cls2", rng, c, 1, 1, init_scale)
    return params


def disc_forward(spec: DiscriminatorSpec, params: Mapping[str, Tensor], x: Tensor) -> Tensor:
    """Raw (pre-sigmoid) realness score per sample, shape ``[N, 1, 1, 1]``."""
    if x.data.ndim != 4 or x.shape[1] != spec.in_channels:
        raise DimensionError(f"{spec.kind} discriminator expects {spec.in_channels} channels, got {x.shape}")
    if spec.head == FC_HEAD and x.shape[2:] != (spec.input_size, spec.input_size):
        raise DimensionError(
            f"{spec.kind} discriminator with dense head needs {spec.input_size}x{spec.input_size} input, "
            f"got {x.shape[2]}x{x.shape[3]}")
    slope = spec.negative_slope
    h = E.leaky_relu(conv(params, "head", x), slope)
    for i, (_, _, stride) in enumerate(spec.block_layout()):
        h = E.leaky_relu(conv(params, f"blocks.{i}", h, stride=stride), slope)
    if spec.head == FC_HEAD:
        h = E.leaky_relu(E.fully_connected(h, params["fc1.weight"], params["fc1.bias"]), slope)
        return E.fully_connected(h, params["fc2.weight"], params["fc2.bias"])
    h = E.leaky_relu(conv(params, "cls1", h, padding=0), slope)
    return E.global_avg_pool(conv(params, "cls2", h, padding=0))


def relativistic_criterion(score_a: Tensor, scores_b: Tensor) -> Tensor:
    """``sigmoid(score_a - mean(scores_b))`` elementwise over ``score_a``."""
    if scores_b.size == 0:
        raise ContractError("relativistic criterion needs a nonempty opposing batch")
    return E.sigmoid(E.sub(score_a, E.mean_all(scores_b)))


@dataclass(frozen=True)
class FeatureExtractorSpec:
    """Fixed conv stack standing in for a pretrained perceptual network.

    ReLU follows every stage except the last, so features are taken before
    the final activation.
    """

    channels: tuple[int, ...] = (16, 32, 64, 64)
    strides: tuple[int, ...] = (1, 2, 2, 2)
    in_channels: int = 3
    kernel: int = 3
    frozen: bool = field(default=True, init=False)

    def __post_init__(self):
        if len(self.channels) != len(self.strides) or not self.channels:
            raise ValueError("channels and strides must be nonempty and equally long")

    @property
    def out_channels(self) -> int:
        return self.channels[-1]

    def out_size(self, size: int) -> int:
        for s in self.strides:
            size = output_size(size, self.kernel, s, self.kernel // 2)
        return size

    def to_dict(self) -> dict:
        return {"channels": list(self.channels), "strides": list(self.strides),
                "in_channels": self.in_channels, "kernel": self.kernel}


def build_feature_extractor(spec: FeatureExtractorSpec = FeatureExtractorSpec(), seed: int = 1234) -> ParameterStore:
    rng = np.random.default_rng(seed)
    params = ParameterStore(trainable=False)
    cin = spec.in_channels
    for i, cout in enumerate(spec.channels):
        init_conv(params, f"stages.{i}", rng, cin, cout, spec.kernel)
        cin = cout
    return params


def load_feature_extractor(path: str | Path, spec: FeatureExtractorSpec = FeatureExtractorSpec(),
                           prefix: str = "") -> ParameterStore:
    """Ingest externally supplied extractor weights stored in the checkpoint format."""
    from .checkpoint import load_checkpoint

    ckpt = load_checkpoint(path)
    params = build_feature_extractor(spec)
    arrays = {k[len(prefix):]: v for k, v in ckpt.arrays.items() if k.startswith(prefix)}
    params.load_arrays(arrays)
    return params


def feature_extract(spec: FeatureExtractorSpec, params: Mapping[str, Tensor], image: Tensor) -> Tensor:
    """Gradient flows through to ``image``; ``params`` must be a frozen store."""
    if any(params[k].requires_grad for k in params):
        raise ContractError("feature extractor parameters must be frozen")
    h = image
    last = len(spec.channels) - 1
    for i, stride in enumerate(spec.strides):
        h = conv(params, f"stages.{i}", h, stride=stride)
        if i < last:
            h = E.relu(h)
    return h


class FeatureExtractor:
    def __init__(self, spec: FeatureExtractorSpec = FeatureExtractorSpec(), params: ParameterStore | None = None,
                 seed: int = 1234):
        self.spec = spec
        self.params = params if params is not None else build_feature_extractor(spec, seed)

    def __call__(self, image: Tensor) -> Tensor:
        return feature_extract(self.spec, self.params, image)


class Discriminator:
    def __init__(self, spec: DiscriminatorSpec, params: ParameterStore | None = None, seed: int = 0):
        self.spec = spec
        self.params = params if params is not None else build_discriminator(spec, seed)

    def __call__(self, x: Tensor, params: Mapping[str, Tensor] | None = None) -> Tensor:
        return disc_forward(self.spec, self.params if params is None else params, x)


__all__ = [
    "CONV_HEAD", "Discriminator", "DiscriminatorSpec", "FC_HEAD", "FEATURE", "FeatureExtractor",
    "FeatureExtractorSpec", "PIXEL", "build_discriminator", "build_feature_extractor", "disc_forward",
    "feature_extract", "load_feature_extractor", "relativistic_criterion",
]
