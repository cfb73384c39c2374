"""Two-stage training, checkpointing, inference and evaluation.

Stage one fits the generator alone with the Charbonnier penalty. Stage two
starts from a stage-one generator and alternates, every iteration, between

1. a pixel-critic update on a mixed batch of real HR patches and detached
   generator outputs,
2. a feature-critic update on the extractor responses of the same batch, and
3. a generator update on the weighted perceptual + L1 + adversarial
   objective, seen through frozen copies of both critics.

All randomness (initialisation, batch sampling, augmentation) comes from
seeded ``numpy.random.Generator`` objects whose state goes into every
checkpoint, so a resumed run continues bit for bit.
"""

from __future__ import annotations

import configparser
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import engine as E
from .checkpoint import Checkpoint, config_hash, load_checkpoint, save_checkpoint
from .discriminators import (
    DiscriminatorSpec, FeatureExtractorSpec, build_discriminator, build_feature_extractor,
    disc_forward, feature_extract, load_feature_extractor,
)
from .engine import ParameterStore, Tape, Tensor
from .errors import ConfigError, ContractError
from .fixtures import smooth_patch_set
from .generator import GeneratorSpec, build_generator, gposr_forward
from .imaging import ImagePlane, degrade, load_image, modcrop
from .losses import (
    LossWeights, adv_loss_discriminator, adv_loss_generator, charbonnier_loss, feature_distance,
    l1_loss, total_generator_loss,
)
from .metrics import MetricRow, measure, write_report
from .optim import AdamState, adam_step, lr_at, resolve_halving_points
from .patches import AUGMENT_TAGS, PatchSet, augment, build_patch_set, read_manifest

log = logging.getLogger(__name__)

PUBLISHED_HALVING_POINTS = (14_400_000, 4_800_000, 4_800_000)
"""Halving schedule of the full-scale run, read as successive interval lengths."""

LOG_KEYS = ("loss_total", "loss_charb", "loss_perc", "loss_advP", "loss_advF")


@dataclass
class TrainConfig:
    """Everything that determines a training run.

    Either ``manifest`` (a list of HR images) or ``synthetic_patches`` (a count
    of smooth generated patches) supplies the data.
    """

    stage: int = 1
    iterations: int = 1000
    batch_size: int = 4
    lr_initial: float = 5e-5
    lr_halving_points: tuple[int, ...] = ()
    halving_mode: str = "cumulative"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    lam: float = 10.0
    eta_pixel: float = 0.125
    eta_feature: float = 0.125
    region: int = 0
    seed: int = 0
    num_blocks: int = 128
    channels: int = 64
    scale: int = 4
    share_parameters: bool = True
    use_attention: bool = True
    init_scale: float = 1.0
    disc_channels: int = 64
    pixel_disc_blocks: int = 8
    feature_disc_blocks: int = 7
    d_steps: int = 1
    perceptual_mode: str = "mse"
    charbonnier_eps: float = 1e-3
    manifest: str = ""
    synthetic_patches: int = 0
    patch_size: int = 96
    patch_stride: int = 48
    augment: bool = True
    workers: int = 1
    output_dir: str = "runs/default"
    stage1_checkpoint: str = ""
    extractor_weights: str = ""
    checkpoint_every: int = 0
    log_every: int = 100
    use_discriminators: bool = True

    def __post_init__(self):
        self.lr_halving_points = tuple(int(p) for p in self.lr_halving_points)
        if self.region:
            preset = LossWeights.for_region(self.region)
            self.lam, self.eta_pixel, self.eta_feature = preset.as_tuple()

    @property
    def weights(self) -> LossWeights:
        return LossWeights(self.lam, self.eta_pixel, self.eta_feature)

    @property
    def generator_spec(self) -> GeneratorSpec:
        return GeneratorSpec.variant(self.num_blocks, self.channels, share=self.share_parameters,
                                     attention=self.use_attention, scale=self.scale)

    def pixel_disc_spec(self) -> DiscriminatorSpec:
        return DiscriminatorSpec.pixel(self.disc_channels, self.patch_size, num_blocks=self.pixel_disc_blocks)

    def feature_disc_spec(self, extractor: FeatureExtractorSpec) -> DiscriminatorSpec:
        return DiscriminatorSpec.feature(extractor.out_channels, self.disc_channels,
                                         num_blocks=self.feature_disc_blocks)

    def halving_iterations(self) -> list[int]:
        return resolve_halving_points(self.lr_halving_points, self.halving_mode)

    def lr(self, iteration: int) -> float:
        return lr_at(iteration, self.lr_initial, self.halving_iterations())

    def validate(self) -> "TrainConfig":
        if self.stage not in (1, 2):
            raise ConfigError(f"stage must be 1 or 2, got {self.stage}")
        for name in ("iterations", "batch_size", "d_steps", "patch_size", "patch_stride", "workers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be a positive integer, got {getattr(self, name)}")
        if not (self.lr_initial > 0 and self.adam_eps > 0 and self.charbonnier_eps > 0):
            raise ConfigError("lr_initial, adam_eps and charbonnier_eps must be positive")
        if not (0 <= self.adam_beta1 < 1 and 0 <= self.adam_beta2 < 1):
            raise ConfigError("ADAM betas must lie in [0, 1)")
        pts = self.halving_iterations()
        if pts and pts[-1] > self.iterations:
            raise ConfigError(f"halving point {pts[-1]} lies beyond the {self.iterations}-iteration budget")
        if self.patch_size % self.scale:
            raise ConfigError("patch_size must be a multiple of scale")
        if self.region and self.stage == 1:
            raise ConfigError("region presets only apply to stage 2")
        if self.region not in (0, 1, 2, 3):
            raise ConfigError(f"region must be 1, 2 or 3, got {self.region}")
        if self.stage == 2 and not self.stage1_checkpoint:
            raise ConfigError("stage 2 needs a stage-1 checkpoint (set stage1_checkpoint)")
        if not self.manifest and not self.synthetic_patches:
            raise ConfigError("no training data: set manifest or synthetic_patches")
        self.weights  # noqa: B018  (validates nonnegativity)
        return self

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["lr_halving_points"] = list(self.lr_halving_points)
        return d

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


_BOOL_WORDS = {"1": True, "true": True, "yes": True, "on": True, "0": False, "false": False, "no": False, "off": False}


def _coerce(name: str, value: Any) -> Any:
    default = {f.name: f for f in dataclasses.fields(TrainConfig)}.get(name)
    if default is None:
        raise ConfigError(f"unknown configuration key {name!r}")
    if not isinstance(value, str):
        return value
    kind = type(getattr(TrainConfig(), name))
    try:
        if kind is bool:
            return _BOOL_WORDS[value.strip().lower()]
        if kind is tuple:
            return tuple(int(float(v)) for v in value.replace(",", " ").split())
        if kind is int:
            f = float(value)
            if f != int(f):
                raise ValueError(value)
            return int(f)
        return kind(value.strip())
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad value {value!r} for {name}") from exc


def load_config(path: str | Path | None = None, overrides: Mapping[str, Any] | None = None) -> TrainConfig:
    """Read ``key = value`` lines (an optional ``[train]`` section header is
    allowed); ``overrides`` win over file values. Relative paths in the file
    resolve against the file's directory."""
    values: dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot read config {path}: {exc}") from exc
        if not text.lstrip().startswith("["):
            text = "[train]\n" + text
        try:
            parser.read_string(text, source=str(path))
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        for section in parser.sections():
            for k, v in parser.items(section):
                values[k] = _coerce(k, v)
        for key in ("manifest", "stage1_checkpoint", "extractor_weights", "output_dir"):
            if values.get(key) and not Path(values[key]).is_absolute():
                values[key] = str(path.parent / values[key])
    for k, v in (overrides or {}).items():
        if v is not None:
            values[k] = _coerce(k, v)
    return TrainConfig(**values)


def load_training_data(config: TrainConfig) -> PatchSet:
    if config.synthetic_patches:
        data = smooth_patch_set(config.synthetic_patches, config.patch_size, config.scale, seed=config.seed)
    else:
        data = build_patch_set(read_manifest(config.manifest), config.patch_size, config.patch_stride,
                               config.scale, workers=config.workers)
    if len(data) == 0:
        raise ConfigError("training data is empty (no image reached the patch size)")
    return data


def _nchw(x: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(x.transpose(0, 3, 1, 2))


def _grads_by_name(params: ParameterStore, grads: Mapping[Tensor, np.ndarray], what: str) -> dict[str, np.ndarray]:
    """Translate tape gradients to parameter names, asserting nothing leaked
    in from tensors outside ``params``."""
    owned = {id(t) for t in params.values()}
    stray = [t.name or repr(t) for t in grads if id(t) not in owned]
    if stray:
        raise ContractError(f"{what} update received gradients for foreign tensors: {stray[:5]}")
    return {name: grads[t] for name, t in params.items() if t in grads}


@dataclass
class StepRecord:
    iteration: int
    stage: int
    lr: float
    losses: dict[str, float]
    output_range: tuple[float, float]
    updates: dict[str, int] = field(default_factory=dict)

    def log_line(self) -> str:
        parts = [f"iter={self.iteration}", f"stage={self.stage}"]
        parts += [f"{k}={self.losses.get(k, 0.0):.6g}" for k in LOG_KEYS]
        parts.append(f"lr={self.lr:.6g}")
        return " ".join(parts)


class Trainer:
    """Owns parameters, optimizer state and the sampling RNG for one run."""

    def __init__(self, config: TrainConfig, data: PatchSet, generator: ParameterStore | None = None,
                 extractor: ParameterStore | None = None):
        self.config = config
        self.data = data
        if len(data) == 0:
            raise ConfigError("training data is empty")
        if data.hr.shape[1] != config.patch_size or data.scale != config.scale:
            raise ConfigError(f"patches are {data.hr.shape[1]}px at x{data.scale}, config wants "
                              f"{config.patch_size}px at x{config.scale}")
        self.gspec = config.generator_spec
        self.gen = generator if generator is not None else build_generator(self.gspec, config.seed, config.init_scale)
        self.adam_g = AdamState()
        self.iteration = 0
        self.rng = np.random.default_rng(config.seed)
        self.update_counts = {"generator": 0, "pixel_disc": 0, "feature_disc": 0}
        self.history: list[StepRecord] = []
        if config.stage == 2:
            self.fspec = FeatureExtractorSpec()
            if extractor is None:
                extractor = (load_feature_extractor(config.extractor_weights, self.fspec)
                             if config.extractor_weights else build_feature_extractor(self.fspec))
            self.extractor = extractor
            self.pspec = config.pixel_disc_spec()
            self.qspec = config.feature_disc_spec(self.fspec)
            self.pixel_disc = build_discriminator(self.pspec, config.seed + 1, config.init_scale)
            self.feature_disc = build_discriminator(self.qspec, config.seed + 2, config.init_scale)
            self.adam_p = AdamState()
            self.adam_f = AdamState()

    # -- data -----------------------------------------------------------

    def sample_batch(self) -> tuple[np.ndarray, np.ndarray]:
        """``(lr, hr)`` in NCHW. Without replacement when the set is large enough."""
        n = len(self.data)
        b = self.config.batch_size
        idx = self.rng.choice(n, size=b, replace=b > n)
        lr, hr = self.data.lr[idx], self.data.hr[idx]
        if self.config.augment:
            tags = self.rng.integers(0, len(AUGMENT_TAGS), size=b)
            lr = np.stack([augment(p, AUGMENT_TAGS[t]) for p, t in zip(lr, tags)])
            hr = np.stack([augment(p, AUGMENT_TAGS[t]) for p, t in zip(hr, tags)])
        return _nchw(lr), _nchw(hr)

    # -- one iteration --------------------------------------------------

    def _adam(self, params: ParameterStore, grads: dict, state: AdamState, lr: float) -> None:
        c = self.config
        adam_step(params, grads, state, lr, c.adam_beta1, c.adam_beta2, c.adam_eps)

    def step(self) -> StepRecord:
        self.iteration += 1
        lr = self.config.lr(self.iteration)
        lr_batch, hr_batch = self.sample_batch()
        if self.config.stage == 1:
            rec = self._stage1_step(lr_batch, hr_batch, lr)
        else:
            rec = self._stage2_step(lr_batch, hr_batch, lr)
        self.history.append(rec)
        return rec

    def _stage1_step(self, lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float) -> StepRecord:
        before = self.adam_g.step
        hr = Tensor(hr_batch)
        with Tape() as tape:
            sr = gposr_forward(self.gspec, self.gen, Tensor(lr_batch))
            loss = charbonnier_loss(sr, hr, self.config.charbonnier_eps)
        grads = _grads_by_name(self.gen, tape.backward(loss), "generator")
        self._adam(self.gen, grads, self.adam_g, lr)
        self.update_counts["generator"] += 1
        assert self.adam_g.step == before + 1
        value = loss.item()
        losses = {"loss_total": value, "loss_charb": value, "loss_perc": 0.0, "loss_advP": 0.0, "loss_advF": 0.0}
        return StepRecord(self.iteration, 1, lr, losses, (float(sr.data.min()), float(sr.data.max())),
                          dict(self.update_counts))

    def _critic_update(self, spec: DiscriminatorSpec, params: ParameterStore, state: AdamState,
                       real: Tensor, fake: Tensor, lr: float, what: str) -> float:
        g_step = self.adam_g.step
        n = real.shape[0]
        with Tape() as tape:
            scores = disc_forward(spec, params, E.concat_batch([real, fake]))
            loss = adv_loss_discriminator(E.slice_batch(scores, 0, n), E.slice_batch(scores, n, 2 * n))
        grads = _grads_by_name(params, tape.backward(loss), what)
        self._adam(params, grads, state, lr)
        if self.adam_g.step != g_step:
            raise ContractError(f"{what} update touched the generator optimizer")
        self.update_counts[what] += 1
        return loss.item()

    def _stage2_step(self, lr_batch: np.ndarray, hr_batch: np.ndarray, lr: float) -> StepRecord:
        c, w = self.config, self.config.weights
        hr = Tensor(hr_batch)
        n = hr.shape[0]
        extract = lambda t: feature_extract(self.fspec, self.extractor, t)  # noqa: E731
        gtape = Tape()
        with gtape:
            sr = gposr_forward(self.gspec, self.gen, Tensor(lr_batch))
        fake = sr.detach()
        hr_feat = extract(hr)
        d_losses = {"pixel_disc": math.nan, "feature_disc": math.nan}
        if c.use_discriminators:
            fake_feat = extract(fake)
            for _ in range(c.d_steps):
                d_losses["pixel_disc"] = self._critic_update(self.pspec, self.pixel_disc, self.adam_p,
                                                             hr, fake, lr, "pixel_disc")
                d_losses["feature_disc"] = self._critic_update(self.qspec, self.feature_disc, self.adam_f,
                                                               hr_feat, fake_feat, lr, "feature_disc")
        with gtape:
            sr_feat = extract(sr)
            perc = feature_distance(sr_feat, hr_feat, c.perceptual_mode)
            l1 = l1_loss(sr, hr)
            adv_p = adv_f = None
            if c.use_discriminators:
                pscores = disc_forward(self.pspec, self.pixel_disc.frozen(), E.concat_batch([hr, sr]))
                adv_p = adv_loss_generator(E.slice_batch(pscores, 0, n), E.slice_batch(pscores, n, 2 * n))
                fscores = disc_forward(self.qspec, self.feature_disc.frozen(), E.concat_batch([hr_feat, sr_feat]))
                adv_f = adv_loss_generator(E.slice_batch(fscores, 0, n), E.slice_batch(fscores, n, 2 * n))
            total = total_generator_loss(w, perc, l1, adv_p if w.eta_pixel else None,
                                         adv_f if w.eta_feature else None)
        grads = _grads_by_name(self.gen, gtape.backward(total), "generator")
        self._adam(self.gen, grads, self.adam_g, lr)
        self.update_counts["generator"] += 1
        charb = float(np.mean(np.sqrt((hr_batch - sr.data) ** 2 + c.charbonnier_eps ** 2)))
        losses = {
            "loss_total": total.item(), "loss_charb": charb, "loss_perc": perc.item(), "loss_l1": l1.item(),
            "loss_advP": adv_p.item() if adv_p is not None else 0.0,
            "loss_advF": adv_f.item() if adv_f is not None else 0.0,
            "loss_dP": d_losses["pixel_disc"], "loss_dF": d_losses["feature_disc"],
        }
        return StepRecord(self.iteration, 2, lr, losses, (float(sr.data.min()), float(sr.data.max())),
                          dict(self.update_counts))

    # -- loop -----------------------------------------------------------

    def run(self, until: int | None = None, should_stop: Callable[[StepRecord], bool] | None = None,
            emit: Callable[[str], None] | None = None) -> Checkpoint:
        """Step until ``until`` (default: the configured budget) or until
        ``should_stop`` returns true, logging and checkpointing on schedule."""
        c = self.config
        until = c.iterations if until is None else min(until, c.iterations)
        emit = emit or log.info
        while self.iteration < until:
            rec = self.step()
            if c.log_every and (rec.iteration % c.log_every == 0 or rec.iteration == 1):
                emit(rec.log_line())
            if c.checkpoint_every and rec.iteration % c.checkpoint_every == 0:
                self.save(Path(c.output_dir) / f"checkpoint_{rec.iteration:08d}.ckpt")
            if should_stop is not None and should_stop(rec):
                emit(rec.log_line())
                break
        return self.checkpoint()

    # -- persistence ----------------------------------------------------

    def checkpoint(self) -> Checkpoint:
        c = self.config
        cfg = c.to_dict()
        ckpt = Checkpoint(iteration=self.iteration, rng_state=self.rng.bit_generator.state,
                          config_hash=config_hash(cfg))
        ckpt.put_group("generator", self.gen.arrays())
        ckpt.put_group("adam_generator", self.adam_g.arrays())
        meta = {"stage": c.stage, "config": cfg, "generator_spec": self.gspec.to_dict(),
                "adam_steps": {"generator": self.adam_g.step}, "update_counts": dict(self.update_counts)}
        if c.stage == 2:
            ckpt.put_group("pixel_disc", self.pixel_disc.arrays())
            ckpt.put_group("feature_disc", self.feature_disc.arrays())
            ckpt.put_group("extractor", self.extractor.arrays())
            ckpt.put_group("adam_pixel_disc", self.adam_p.arrays())
            ckpt.put_group("adam_feature_disc", self.adam_f.arrays())
            meta["adam_steps"].update(pixel_disc=self.adam_p.step, feature_disc=self.adam_f.step)
            meta["pixel_disc_spec"] = self.pspec.to_dict()
            meta["feature_disc_spec"] = self.qspec.to_dict()
            meta["extractor_spec"] = self.fspec.to_dict()
        ckpt.meta = meta
        return ckpt

    def save(self, path: str | Path) -> Path:
        return save_checkpoint(self.checkpoint(), path)

    def restore(self, ckpt: Checkpoint) -> "Trainer":
        """Load a checkpoint of the same stage and continue from its iteration."""
        if ckpt.meta.get("stage") != self.config.stage:
            raise ConfigError(f"checkpoint is from stage {ckpt.meta.get('stage')}, run is stage {self.config.stage}")
        _check_generator_spec(ckpt, self.gspec)
        self.gen.load_arrays(ckpt.group("generator"))
        steps = ckpt.meta.get("adam_steps", {})
        self.adam_g = AdamState.from_arrays(ckpt.group("adam_generator"), steps.get("generator", 0))
        if self.config.stage == 2:
            self.pixel_disc.load_arrays(ckpt.group("pixel_disc"))
            self.feature_disc.load_arrays(ckpt.group("feature_disc"))
            self.extractor.load_arrays(ckpt.group("extractor"))
            self.adam_p = AdamState.from_arrays(ckpt.group("adam_pixel_disc"), steps.get("pixel_disc", 0))
            self.adam_f = AdamState.from_arrays(ckpt.group("adam_feature_disc"), steps.get("feature_disc", 0))
        self.iteration = ckpt.iteration
        if ckpt.rng_state is not None:
            self.rng.bit_generator.state = ckpt.rng_state
        self.update_counts.update(ckpt.meta.get("update_counts", {}))
        return self


def _check_generator_spec(ckpt: Checkpoint, spec: GeneratorSpec) -> None:
    stored = ckpt.meta.get("generator_spec")
    if stored is not None and GeneratorSpec.from_dict(stored) != spec:
        raise ConfigError(f"checkpoint generator {stored} does not match configured {spec.to_dict()}")
    if not ckpt.has_group("generator"):
        raise ConfigError("checkpoint holds no generator parameters")


def generator_from_checkpoint(ckpt: Checkpoint, spec: GeneratorSpec | None = None) -> tuple[GeneratorSpec, ParameterStore]:
    if spec is None:
        if "generator_spec" not in ckpt.meta:
            raise ConfigError("checkpoint does not record its generator spec; pass one explicitly")
        spec = GeneratorSpec.from_dict(ckpt.meta["generator_spec"])
    _check_generator_spec(ckpt, spec)
    params = build_generator(spec)
    params.load_arrays(ckpt.group("generator"))
    return spec, params


def make_trainer(config: TrainConfig, data: PatchSet | None = None, resume: str | Path | None = None) -> Trainer:
    config.validate()
    data = load_training_data(config) if data is None else data
    generator = None
    if config.stage == 2:
        _, generator = generator_from_checkpoint(load_checkpoint(config.stage1_checkpoint), config.generator_spec)
    trainer = Trainer(config, data, generator)
    if resume:
        trainer.restore(load_checkpoint(resume))
    return trainer


def train_stage1(config: TrainConfig, data: PatchSet | None = None, **run_kw) -> Checkpoint:
    if config.stage != 1:
        config = config.replace(stage=1)
    return make_trainer(config, data).run(**run_kw)


def train_stage2(config: TrainConfig, stage1_checkpoint: str | Path | None = None, data: PatchSet | None = None,
                 **run_kw) -> Checkpoint:
    changes = {"stage": 2}
    if stage1_checkpoint is not None:
        changes["stage1_checkpoint"] = str(stage1_checkpoint)
    return make_trainer(config.replace(**changes), data).run(**run_kw)


# -- inference --------------------------------------------------------------


def _tile_starts(length: int, tile: int, overlap: int) -> list[int]:
    if length <= tile:
        return [0]
    step = tile - overlap
    starts = list(range(0, length - tile, step))
    starts.append(length - tile)
    return starts


def _blend_ramp(length: int, ramp: int, lead: bool, trail: bool) -> np.ndarray:
    w = np.ones(length)
    if ramp > 0:
        r = (np.arange(ramp) + 0.5) / ramp
        if lead:
            w[:ramp] = np.minimum(w[:ramp], r)
        if trail:
            w[-ramp:] = np.minimum(w[-ramp:], r[::-1])
    return w


def super_resolve(spec: GeneratorSpec, params: Mapping[str, Tensor], lr_data: np.ndarray,
                  tile: int = 128, overlap: int = 8) -> np.ndarray:
    """``[H, W, 3]`` unit-range LR array to an unclipped ``[sH, sW, 3]`` array.

    Inputs larger than ``tile`` LR pixels are processed in overlapping tiles
    whose outputs are blended with linear ramps across each overlap.
    """
    if overlap < 0 or tile <= overlap:
        raise ConfigError(f"tile ({tile}) must exceed overlap ({overlap})")
    h, w = lr_data.shape[:2]
    s = spec.scale

    def run(patch):
        return gposr_forward(spec, params, Tensor(_nchw(patch[None]))).data[0].transpose(1, 2, 0)

    if h <= tile and w <= tile:
        return run(lr_data)
    out = np.zeros((h * s, w * s, 3))
    weight = np.zeros((h * s, w * s, 1))
    ys, xs = _tile_starts(h, tile, overlap), _tile_starts(w, tile, overlap)
    for y in ys:
        for x in xs:
            th, tw = min(tile, h), min(tile, w)
            sr = run(lr_data[y:y + th, x:x + tw])
            wy = _blend_ramp(th * s, overlap * s, y > 0, y + th < h)
            wx = _blend_ramp(tw * s, overlap * s, x > 0, x + tw < w)
            wt = np.outer(wy, wx)[:, :, None]
            out[y * s:(y + th) * s, x * s:(x + tw) * s] += sr * wt
            weight[y * s:(y + th) * s, x * s:(x + tw) * s] += wt
    return out / weight


def infer(checkpoint: Checkpoint | str | Path, lr_image: ImagePlane, tile: int = 128, overlap: int = 8) -> ImagePlane:
    """Generator-only upscaling, clipped to [0, 1]."""
    ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
    spec, params = generator_from_checkpoint(ckpt)
    return infer_with(spec, params, lr_image, tile, overlap)


def infer_with(spec: GeneratorSpec, params: Mapping[str, Tensor], lr_image: ImagePlane, tile: int = 128,
               overlap: int = 8) -> ImagePlane:
    if lr_image.space != "RGB":
        raise ContractError("inference needs an RGB image")
    sr = super_resolve(spec, params, lr_image.to_range("unit").data, tile, overlap)
    return ImagePlane(np.clip(sr, 0.0, 1.0), "unit", "RGB")


def evaluate(checkpoint: Checkpoint | str | Path | None, manifest: str | Path, out_csv: str | Path | None = None,
             border: int = 4, y_only: bool = True, sr_dir: str | Path | None = None,
             scale: int | None = None) -> list[MetricRow]:
    """Degrade, super-resolve and score every manifest entry.

    With ``sr_dir`` the generator is skipped and images of the same file name
    under ``sr_dir`` are scored against the HR images instead.
    """
    paths = read_manifest(manifest)
    spec = params = None
    if sr_dir is None:
        if checkpoint is None:
            raise ConfigError("evaluate needs a checkpoint or an sr_dir")
        ckpt = checkpoint if isinstance(checkpoint, Checkpoint) else load_checkpoint(checkpoint)
        spec, params = generator_from_checkpoint(ckpt)
        scale = spec.scale
    rows = []
    for p in paths:
        hr = load_image(p)
        if sr_dir is not None:
            sr = load_image(Path(sr_dir) / Path(p).name)
        else:
            hr = modcrop(hr, scale)
            sr = infer_with(spec, params, degrade(hr, scale))
        rows.append(measure(Path(p).name, sr, hr, border, y_only))
    if out_csv is not None:
        write_report(rows, out_csv)
    return rows


__all__ = [
    "LOG_KEYS", "PUBLISHED_HALVING_POINTS", "StepRecord", "TrainConfig", "Trainer", "evaluate",
    "generator_from_checkpoint", "infer", "infer_with", "load_config", "load_training_data", "make_trainer",
    "super_resolve", "train_stage1", "train_stage2",
]
