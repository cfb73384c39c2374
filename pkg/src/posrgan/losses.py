"""Training objectives.

Stage one minimises the Charbonnier penalty. Stage two minimises
``perceptual + lam * L1 + eta_pixel * adv_pixel + eta_feature * adv_feature``,
where the adversarial terms are relativistic-average losses against the two
critics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

from . import engine as E
from .discriminators import relativistic_criterion
from .engine import Tensor
from .errors import ConfigError, DimensionError

LOG_FLOOR = 1e-12


@dataclass(frozen=True)
class LossWeights:
    lam: float = 10.0
    eta_pixel: float = 0.125
    eta_feature: float = 0.125

    def __post_init__(self):
        if min(self.lam, self.eta_pixel, self.eta_feature) < 0:
            raise ConfigError(f"loss weights must be nonnegative, got {self}")

    @classmethod
    def for_region(cls, region: int) -> "LossWeights":
        try:
            return REGION_PRESETS[int(region)]
        except (KeyError, ValueError):
            raise ConfigError(f"no loss-weight preset for region {region!r}; choose 1, 2 or 3") from None

    def as_tuple(self) -> tuple[float, float, float]:
        return self.lam, self.eta_pixel, self.eta_feature


REGION_PRESETS = {
    1: LossWeights(100.0, 0.005, 0.005),
    2: LossWeights(30.0, 0.005, 0.005),
    3: LossWeights(10.0, 0.125, 0.125),
}


def _same_shape(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{what}: shapes differ, {a.shape} vs {b.shape}")


def charbonnier_loss(sr: Tensor, hr: Tensor, eps: float = 1e-3) -> Tensor:
    """Mean of ``sqrt((hr - sr)^2 + eps^2)`` over every element."""
    _same_shape(sr, hr, "charbonnier_loss")
    if eps <= 0:
        raise ConfigError("Charbonnier epsilon must be positive")
    return E.mean_all(E.sqrt(E.add_const(E.square(E.sub(hr, sr)), eps * eps)))


def l1_loss(sr: Tensor, hr: Tensor) -> Tensor:
    _same_shape(sr, hr, "l1_loss")
    return E.mean_all(E.abs(E.sub(hr, sr)))


def perceptual_loss(extract: Callable[[Tensor], Tensor], sr: Tensor, hr: Tensor, mode: str = "mse") -> Tensor:
    """Distance between extractor responses; the HR branch is detached.

    ``mode="mse"`` is the element-averaged squared Euclidean distance,
    ``mode="l1"`` the element-averaged absolute difference.
    """
    _same_shape(sr, hr, "perceptual_loss")
    return feature_distance(extract(sr), extract(hr.detach()), mode)


def feature_distance(sr_features: Tensor, hr_features: Tensor, mode: str = "mse") -> Tensor:
    """Perceptual distance on precomputed features; ``hr_features`` is treated as a constant."""
    _same_shape(sr_features, hr_features, "feature_distance")
    diff = E.sub(sr_features, hr_features.detach())
    if mode == "mse":
        return E.mean_all(E.square(diff))
    if mode == "l1":
        return E.mean_all(E.abs(diff))
    raise ConfigError(f"unknown perceptual loss mode {mode!r}")


def _one_minus(x: Tensor) -> Tensor:
    return E.add_const(E.scale(x, -1.0), 1.0)


def adv_loss_generator(real_scores: Tensor, fake_scores: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """``-mean log(1 - C(real, fake)) - mean log C(fake, real)``."""
    real_vs_fake = relativistic_criterion(real_scores, fake_scores)
    fake_vs_real = relativistic_criterion(fake_scores, real_scores)
    a = E.mean_all(E.log(_one_minus(real_vs_fake), floor))
    b = E.mean_all(E.log(fake_vs_real, floor))
    return E.scale(E.add(a, b), -1.0)


def adv_loss_discriminator(real_scores: Tensor, fake_scores: Tensor, floor: float = LOG_FLOOR) -> Tensor:
    """``-mean log C(real, fake) - mean log(1 - C(fake, real))``."""
    real_vs_fake = relativistic_criterion(real_scores, fake_scores)
    fake_vs_real = relativistic_criterion(fake_scores, real_scores)
    a = E.mean_all(E.log(real_vs_fake, floor))
    b = E.mean_all(E.log(_one_minus(fake_vs_real), floor))
    return E.scale(E.add(a, b), -1.0)


def total_generator_loss(weights: LossWeights, perceptual: Tensor, l1: Tensor,
                         adv_pixel: Tensor | None = None, adv_feature: Tensor | None = None) -> Tensor:
    """Weighted stage-two objective. Zero-weighted terms are left out of the graph,
    so their inputs may be ``None``."""
    total = perceptual
    for w, term in ((weights.lam, l1), (weights.eta_pixel, adv_pixel), (weights.eta_feature, adv_feature)):
        if w == 0:
            continue
        if term is None:
            raise ConfigError("a loss term with nonzero weight was not computed")
        total = E.add(total, E.scale(term, w))
    return total
