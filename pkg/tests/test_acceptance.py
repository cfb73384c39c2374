"""Headline acceptance criteria, one test per criterion.

Each test carries an ``acceptance`` marker; ``conftest.py`` prints a
``PASS``/``FAIL`` line per criterion in the terminal summary. The overfit
criterion trains for several minutes and is also marked ``slow``.
"""

import math
import re
import time

import numpy as np
import pytest

from posrgan import engine as E
from posrgan.blocks import ChannelAttentionSpec, RCABSpec, channel_attention_forward, init_channel_attention, \
    init_rcab, rcab_forward
from posrgan.cli import main
from posrgan.discriminators import DiscriminatorSpec, FeatureExtractorSpec, build_discriminator, \
    build_feature_extractor, disc_forward, feature_extract, relativistic_criterion
from posrgan.engine import ParameterStore, Tensor, finite_diff_check
from posrgan.generator import GeneratorSpec, build_generator, gposr_forward
from posrgan.imaging import ImagePlane, contributions, resize_array
from posrgan.losses import adv_loss_discriminator, adv_loss_generator, charbonnier_loss, l1_loss, perceptual_loss
from posrgan.metrics import classify_region, psnr, rmse_pirm, ssim
from posrgan.trainer import TrainConfig, Trainer, generator_from_checkpoint, make_trainer, super_resolve

from test_imaging import weight_matrix
from test_metrics import psnr_oracle, rmse_oracle, ssim_oracle

RTOL, STEP = 1e-4, 1e-4


def criterion(name):
    return pytest.mark.acceptance(name)


# -- parameter counts -----------------------------------------------------------

TABLE5 = [  # blocks, channels, extra flags, published millions
    (128, 64, [], 5.14),
    (128, 64, ["--no-attention"], 5.06),
    (128, 64, ["--no-share"], 9.86),
    (128, 32, [], 1.29),
    (128, 16, [], 0.33),
    (64, 64, [], 2.74),
    (32, 64, [], 1.54),
]


def params_via_cli(capsys, blocks, channels, flags):
    assert main(["params", "--blocks", str(blocks), "--channels", str(channels), *flags]) == 0
    return int(re.search(r"parameters=(\d+)", capsys.readouterr().out).group(1))


@criterion("parameter counts: 7 variants within 2%, structural deltas within 5%, under 1 s")
def test_parameter_counts(capsys):
    start = time.perf_counter()
    counts = {}
    for blocks, channels, flags, millions in TABLE5:
        n = params_via_cli(capsys, blocks, channels, flags)
        counts[(blocks, channels, tuple(flags))] = n
        assert abs(n / 1e6 - millions) <= 0.02 * millions, (blocks, channels, flags, n)
    elapsed = time.perf_counter() - start
    shared = counts[(128, 64, ())]
    unshared_delta = counts[(128, 64, ("--no-share",))] - shared
    attention_delta = shared - counts[(128, 64, ("--no-attention",))]
    assert abs(unshared_delta / 1e6 - 4.72) <= 0.05 * 4.72, unshared_delta
    assert 0.07 * 0.95 <= attention_delta / 1e6 <= 0.08 * 1.05, attention_delta
    assert elapsed < 1.0, elapsed


# -- gradient suite -------------------------------------------------------------


def _named(rng, *shape, scale=1.0, name):
    return Tensor(rng.standard_normal(shape) * scale, name=name)


def _loss(x):
    """A scalar that weights every output element differently."""
    w = Tensor(np.sin(np.arange(x.size, dtype=float)).reshape(x.shape) + 1.5)
    return E.mean_all(E.mul(x, w))


def _away_from_kinks(rng, forward, shape, margin=1e-3, tries=200):
    """Draw an input whose LeakyReLU pre-activations all sit at least
    ``margin`` from zero, so a 1e-4 central difference never straddles a kink
    of the piecewise-linear critic."""
    seen = []
    original = E.leaky_relu

    def recording(x, *args, **kw):
        seen.append(np.abs(x.data).min())
        return original(x, *args, **kw)

    for _ in range(tries):
        x = _named(rng, *shape, name="x")
        seen.clear()
        E.leaky_relu = recording
        try:
            forward(x)
        finally:
            E.leaky_relu = original
        if min(seen) >= margin:
            return x
    raise RuntimeError("no kink-free input found")


def gradient_cases(rng):
    """``(label, f, tensors)`` triples covering every layer, block and loss."""
    cases = []
    for cin, cout, stride, pad in ((3, 4, 1, 1), (4, 2, 2, 1), (2, 3, 1, 0), (3, 2, 2, 0)):
        x, w, b = _named(rng, 2, cin, 7, 6, name="x"), _named(rng, cout, cin, 3, 3, name="w"), \
            _named(rng, cout, name="b")
        cases.append((f"conv2d {cin}->{cout} s{stride} p{pad}",
                      lambda x=x, w=w, b=b, s=stride, p=pad: _loss(E.conv2d(x, w, b, s, p)), [x, w, b]))
    x, w, b = _named(rng, 3, 5, 1, 1, name="x"), _named(rng, 4, 5, name="w"), _named(rng, 4, name="b")
    cases.append(("fully connected", lambda x=x, w=w, b=b: _loss(E.fully_connected(x, w, b)), [x, w, b]))
    for label, op in (("relu", E.relu), ("leaky relu", E.leaky_relu), ("sigmoid", E.sigmoid),
                      ("square", E.square), ("abs", E.abs)):
        x = _named(rng, 2, 3, 3, 3, name="x")
        x.data[np.abs(x.data) < 1e-2] += 0.05  # keep kinks outside the difference stencil
        cases.append((label, lambda x=x, op=op: _loss(op(x)), [x]))
    x = Tensor(rng.uniform(0.2, 2.0, (1, 2, 3, 3)), name="x")
    cases.append(("sqrt and log", lambda x=x: _loss(E.add(E.sqrt(x), E.log(x))), [x]))
    x = _named(rng, 2, 8, 3, 2, name="x")
    cases.append(("pixel shuffle", lambda x=x: _loss(E.pixel_shuffle(x, 2)), [x]))
    x = _named(rng, 2, 3, 4, 5, name="x")
    cases.append(("global average pool", lambda x=x: _loss(E.global_avg_pool(x)), [x]))
    a, b2 = _named(rng, 2, 3, 2, 2, name="a"), _named(rng, 1, 3, 2, 2, name="b")
    cases.append(("concat and slice batch",
                  lambda: _loss(E.slice_batch(E.concat_batch([a, b2]), 1, 3)), [a, b2]))

    ca = ChannelAttentionSpec(8, reduction=4)
    ca_params = ParameterStore()
    init_channel_attention(ca, ca_params, rng)
    x = _named(rng, 2, 8, 4, 4, name="x")
    cases.append(("channel attention", lambda x=x: _loss(channel_attention_forward(ca, x, ca_params)),
                  [x, *ca_params.values()]))
    for share in (True, False):
        spec = RCABSpec(4, share_parameters=share, reduction=2)
        p = ParameterStore()
        init_rcab(spec, p, rng)
        x = _named(rng, 1, 4, 5, 5, name="x")
        cases.append((f"RCAB {'shared' if share else 'unshared'}",
                      lambda spec=spec, p=p, x=x: _loss(rcab_forward(spec, x, p)), [x, *p.values()]))

    g = GeneratorSpec.variant(2, 4, scale=2)
    gp = build_generator(g, seed=3)
    x = Tensor(rng.uniform(0, 1, (1, 3, 4, 4)), name="lr")
    cases.append(("generator end to end", lambda x=x: _loss(gposr_forward(g, gp, x)), [x, *gp.values()]))
    for label, spec, shape in (("pixel critic", DiscriminatorSpec.pixel(4, 8, num_blocks=3, fc_hidden=16), (2, 3, 8, 8)),
                               ("feature critic", DiscriminatorSpec.feature(5, 4, num_blocks=3), (2, 5, 6, 6))):
        dp = build_discriminator(spec, seed=4)
        x = _away_from_kinks(rng, lambda x, spec=spec, dp=dp: disc_forward(spec, dp, x), shape)
        cases.append((label, lambda spec=spec, dp=dp, x=x: _loss(disc_forward(spec, dp, x)), [x, *dp.values()]))
    fspec = FeatureExtractorSpec(channels=(4, 6), strides=(1, 2))
    fp = build_feature_extractor(fspec, seed=5)
    x = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)), name="x")
    cases.append(("feature extractor", lambda x=x: _loss(feature_extract(fspec, fp, x)), [x]))

    hr = Tensor(rng.uniform(0, 1, (1, 2, 3, 3)))
    sr0 = Tensor(hr.data.copy(), name="sr")
    cases.append(("Charbonnier at zero difference", lambda: charbonnier_loss(sr0, hr), [sr0]))
    sr = Tensor(hr.data + rng.choice([-1, 1], hr.shape) * rng.uniform(0.05, 0.5, hr.shape), name="sr")
    cases.append(("Charbonnier", lambda: charbonnier_loss(sr, hr), [sr]))
    cases.append(("L1", lambda: l1_loss(sr, hr), [sr]))
    img = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)), name="sr")
    ref = Tensor(rng.uniform(0, 1, (1, 3, 6, 6)))
    cases.append(("perceptual", lambda: perceptual_loss(lambda t: feature_extract(fspec, fp, t), img, ref), [img]))
    real, fake = _named(rng, 3, 1, 1, 1, name="real"), _named(rng, 3, 1, 1, 1, name="fake")
    cases.append(("adversarial generator", lambda: adv_loss_generator(real, fake), [real, fake]))
    cases.append(("adversarial discriminator", lambda: adv_loss_discriminator(real, fake), [real, fake]))
    return cases


@criterion("gradient suite: central differences at rtol 1e-4, step 1e-4, under 2 min")
def test_gradient_suite():
    start = time.perf_counter()
    failures = []
    for label, f, tensors in gradient_cases(np.random.default_rng(11)):
        report = finite_diff_check(f, tensors, RTOL, STEP)
        if not report.passed:
            failures.append(f"{label}: {report}")
    elapsed = time.perf_counter() - start
    assert not failures, "\n".join(failures)
    assert elapsed < 120, elapsed


def test_gradient_suite_shared_accumulation():
    """The shared RCAB kernel gets the sum of both use sites' gradients."""
    rng = np.random.default_rng(12)
    spec = RCABSpec(3, use_attention=False)
    p = ParameterStore()
    init_rcab(spec, p, rng)
    x = _named(rng, 1, 3, 4, 4, name="x")
    with E.Tape() as tape:
        shared = _loss(rcab_forward(spec, x, p))
    g_shared = tape.backward(shared)[p["conv.weight"]]
    w1 = Tensor(p["conv.weight"].data.copy(), requires_grad=True)
    w2 = Tensor(p["conv.weight"].data.copy(), requires_grad=True)
    b = p["conv.bias"]
    with E.Tape() as tape:
        h = E.relu(E.conv2d(x, w1, b, 1, 1))
        untied = _loss(E.add(x, E.conv2d(h, w2, b, 1, 1)))
    grads = tape.backward(untied)
    assert untied.item() == pytest.approx(shared.item(), rel=1e-14)
    np.testing.assert_allclose(g_shared, grads[w1] + grads[w2], rtol=1e-12, atol=1e-15)


# -- RaGAN equilibrium ----------------------------------------------------------


@criterion("RaGAN equilibrium at 2 ln 2 within 1e-9, shift invariance over 100 offsets")
def test_ragan_equilibrium():
    rng = np.random.default_rng(13)
    # coinciding distributions: every real and fake score takes the same value
    for n in (1, 4, 16):
        for level in (-30.0, -1.7, 0.0, 0.4, 12.0):
            s = np.full((n, 1, 1, 1), level)
            for loss in (adv_loss_generator, adv_loss_discriminator):
                value = loss(Tensor(s), Tensor(s.copy())).item()
                assert abs(value - 2 * math.log(2)) <= 1e-9, (loss.__name__, n, level, value)
    for offset in rng.uniform(-25, 25, 100):
        a, b = rng.standard_normal((4, 1, 1, 1)), rng.standard_normal((6, 1, 1, 1))
        base = relativistic_criterion(Tensor(a), Tensor(b)).data
        shifted = relativistic_criterion(Tensor(a + offset), Tensor(b + offset)).data
        np.testing.assert_allclose(shifted, base, rtol=1e-9, atol=1e-12)


# -- overfit --------------------------------------------------------------------

OVERFIT = TrainConfig(
    stage=1, iterations=20_000, batch_size=8, num_blocks=4, channels=16, synthetic_patches=8, patch_size=96,
    augment=False, lr_initial=1e-3, lr_halving_points=(2500, 3500, 4500, 6000), halving_mode="absolute",
    log_every=0, seed=0,
)


@pytest.mark.slow
@criterion("overfit: Charbonnier below 5e-3 within 20k iterations, training-patch PSNR above 40 dB")
def test_overfit_convergence():
    trainer = make_trainer(OVERFIT)
    trainer.run(should_stop=lambda rec: rec.losses["loss_charb"] < 5e-3)
    final = trainer.history[-1]
    print(f"overfit stopped at iteration {final.iteration} with loss_charb={final.losses['loss_charb']:.5f}")
    assert final.losses["loss_charb"] < 5e-3
    assert trainer.iteration <= 20_000
    data = trainer.data
    scores = []
    for lr, hr in zip(data.lr, data.hr):
        sr = np.clip(super_resolve(trainer.gspec, trainer.gen, lr), 0, 1)
        scores.append(psnr(ImagePlane(sr), ImagePlane(hr), border=0, y_only=False))
    print(f"training-patch RGB PSNR mean={np.mean(scores):.2f} dB min={np.min(scores):.2f} dB")
    assert np.mean(scores) > 40.0


# -- stage-2 smoke --------------------------------------------------------------

SMOKE = dict(num_blocks=2, channels=8, patch_size=16, patch_stride=8, synthetic_patches=8, batch_size=4,
             disc_channels=4, augment=True, log_every=0, seed=3)


class DetachmentWatch(Trainer):
    """Snapshots parameters around every optimizer step and fails if an
    update moves anything outside the network it belongs to."""

    checks = 0

    @staticmethod
    def _snap(store):
        return {k: v.copy() for k, v in store.arrays().items()}

    @staticmethod
    def _same(a, b):
        return all(np.array_equal(a[k], b[k]) for k in a)

    def _critic_update(self, spec, params, state, real, fake, lr, what):
        g_before, other = self._snap(self.gen), self.feature_disc if what == "pixel_disc" else self.pixel_disc
        o_before = self._snap(other)
        out = super()._critic_update(spec, params, state, real, fake, lr, what)
        assert self._same(g_before, self._snap(self.gen)), f"{what} update moved the generator"
        assert self._same(o_before, self._snap(other)), f"{what} update moved the other critic"
        self.checks += 1
        return out

    def _adam(self, params, grads, state, lr):
        if params is self.gen:
            p_before, f_before = self._snap(self.pixel_disc), self._snap(self.feature_disc)
            super()._adam(params, grads, state, lr)
            assert self._same(p_before, self._snap(self.pixel_disc)), "generator step moved the pixel critic"
            assert self._same(f_before, self._snap(self.feature_disc)), "generator step moved the feature critic"
            assert set(grads) <= set(self.gen.keys())
            self.checks += 1
        else:
            super()._adam(params, grads, state, lr)


@criterion("stage-2 smoke: 500 iterations, finite losses, bounded output, detachment every iteration")
def test_stage2_smoke():
    stage1 = make_trainer(TrainConfig(stage=1, iterations=300, lr_initial=1e-3, **SMOKE))
    stage1.run()
    cfg = TrainConfig(stage=2, iterations=500, lr_initial=1e-4, region=3, stage1_checkpoint="<in memory>", **SMOKE)
    cfg.validate()
    _, gen = generator_from_checkpoint(stage1.checkpoint(), cfg.generator_spec)
    trainer = DetachmentWatch(cfg, stage1.data, gen)
    trainer.run()
    assert trainer.update_counts == {"generator": 500, "pixel_disc": 500, "feature_disc": 500}
    assert trainer.checks == 3 * 500
    streams = ("loss_total", "loss_perc", "loss_advP", "loss_advF", "loss_dP", "loss_dF", "loss_l1")
    lows, highs = [], []
    for rec in trainer.history:
        for key in streams:
            assert math.isfinite(rec.losses[key]), (rec.iteration, key)
        lows.append(rec.output_range[0])
        highs.append(rec.output_range[1])
    print(f"stage-2 output range over 500 iterations: [{min(lows):.3f}, {max(highs):.3f}]")
    assert min(lows) >= -2.0 and max(highs) <= 3.0


# -- metric oracles -------------------------------------------------------------


@criterion("metric oracles: 20 random pairs at rtol 1e-10, border invariance, region anchors")
def test_metric_oracles():
    r = np.random.default_rng(14)
    for _ in range(20):
        h, w = r.integers(24, 33, size=2)
        a = r.integers(0, 256, (h, w, 3)).astype(float)
        b = np.clip(np.round(a + r.normal(0, r.uniform(2, 30), a.shape)), 0, 255)
        pa, pb = ImagePlane(a, "byte"), ImagePlane(b, "byte")
        assert psnr(pa, pb) == pytest.approx(psnr_oracle(a, b, 4), rel=1e-10)
        assert ssim(pa, pb) == pytest.approx(ssim_oracle(a, b, 4), rel=1e-10)
        assert rmse_pirm(pa, pb) == pytest.approx(rmse_oracle(a, b), rel=1e-10)
        b2 = b.copy()
        b2[:4], b2[-4:], b2[:, :4], b2[:, -4:] = 0, 255, 17, 200
        pb2 = ImagePlane(b2, "byte")
        assert (psnr(pa, pb), ssim(pa, pb), rmse_pirm(pa, pb)) == (psnr(pa, pb2), ssim(pa, pb2), rmse_pirm(pa, pb2))
    assert (classify_region(15.02), classify_region(12.50), classify_region(11.48)) == (3, 2, 1)


# -- bicubic kernel -------------------------------------------------------------


@criterion("bicubic kernel: partition of unity within 1e-12, impulse response within 1e-9")
def test_bicubic_kernel():
    for scale in (0.25, 0.5, 2.0, 4.0):
        for n_in in (4, 9, 16, 31, 96):
            _, w = contributions(n_in, math.ceil(n_in * scale), scale)
            assert np.abs(w.sum(axis=1) - 1).max() <= 1e-12, (scale, n_in)
    for scale, n in ((0.25, 16), (0.5, 10), (2.0, 6), (4.0, 5)):
        m = weight_matrix(n, math.ceil(n * scale), scale)
        for pos in ((0, 0), (n // 2, n // 3), (n - 1, n - 1)):
            img = np.zeros((n, n))
            img[pos] = 1.0
            np.testing.assert_allclose(resize_array(img, scale), m @ img @ m.T, rtol=0, atol=1e-9)


# -- determinism and resume -----------------------------------------------------


def _stores(trainer):
    out = {"gen": trainer.gen.arrays(), "adam_g": trainer.adam_g.arrays()}
    if trainer.config.stage == 2:
        out.update(pixel=trainer.pixel_disc.arrays(), feature=trainer.feature_disc.arrays(),
                   adam_p=trainer.adam_p.arrays(), adam_f=trainer.adam_f.arrays())
    return out


def _assert_bitwise(a, b):
    sa, sb = _stores(a), _stores(b)
    for group in sa:
        for k, v in sa[group].items():
            assert np.array_equal(v, sb[group][k]), (group, k)
    assert a.rng.bit_generator.state == b.rng.bit_generator.state


@criterion("determinism and resume: fixed-seed runs and resumed runs are bitwise identical")
def test_determinism_and_resume(tmp_path):
    s1 = TrainConfig(stage=1, iterations=12, lr_initial=1e-3, **SMOKE)
    a, b = make_trainer(s1), make_trainer(s1)
    a.run()
    b.run()
    _assert_bitwise(a, b)
    half = make_trainer(s1)
    half.run(until=5)
    half.save(tmp_path / "s1_mid.ckpt")
    resumed = make_trainer(s1, resume=tmp_path / "s1_mid.ckpt")
    resumed.run()
    _assert_bitwise(a, resumed)

    a.save(tmp_path / "s1.ckpt")
    s2 = TrainConfig(stage=2, iterations=8, lr_initial=1e-4, region=3, stage1_checkpoint=str(tmp_path / "s1.ckpt"),
                     **SMOKE)
    c, d = make_trainer(s2), make_trainer(s2)
    c.run()
    d.run()
    _assert_bitwise(c, d)
    half = make_trainer(s2)
    half.run(until=3)
    half.save(tmp_path / "s2_mid.ckpt")
    resumed = make_trainer(s2, resume=tmp_path / "s2_mid.ckpt")
    resumed.run()
    _assert_bitwise(c, resumed)
