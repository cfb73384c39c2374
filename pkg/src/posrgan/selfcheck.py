"""Quick built-in verification run by ``posrgan selfcheck``.

Each check is small enough that the whole run takes a few seconds. The
full-strength versions live in the test suite.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from . import engine as E
from .blocks import RCABSpec, init_rcab, rcab_forward
from .engine import ParameterStore, Tensor, finite_diff_check
from .imaging import ImagePlane, contributions
from .losses import adv_loss_discriminator, adv_loss_generator, charbonnier_loss
from .metrics import psnr, rmse_pirm, ssim


def _grad_conv() -> bool:
    rng = np.random.default_rng(0)
    ok = True
    for cin, cout, stride in ((3, 5, 1), (5, 2, 1), (2, 3, 2)):
        x = Tensor(rng.standard_normal((2, cin, 6, 5)), name="x")
        w = Tensor(rng.standard_normal((cout, cin, 3, 3)), name="w")
        b = Tensor(rng.standard_normal(cout), name="b")
        r = finite_diff_check(lambda: E.mean_all(E.square(E.conv2d(x, w, b, stride, 1))), [x, w, b])
        ok &= r.passed
    return ok


def _grad_shared_rcab() -> bool:
    rng = np.random.default_rng(1)
    spec = RCABSpec(4, reduction=2)
    params = ParameterStore()
    init_rcab(spec, params, rng)
    x = Tensor(rng.standard_normal((1, 4, 5, 5)), name="x")
    r = finite_diff_check(lambda: E.mean_all(E.square(rcab_forward(spec, x, params))), [x, *params.values()])
    return r.passed


def _grad_charbonnier_at_zero() -> bool:
    hr = Tensor(np.random.default_rng(2).standard_normal((1, 1, 3, 3)))
    sr = Tensor(hr.data.copy(), name="sr")
    return finite_diff_check(lambda: charbonnier_loss(sr, hr), [sr]).passed


def _ragan_equilibrium() -> bool:
    s = Tensor(np.full((4, 1, 1, 1), 0.7))
    return all(abs(f(s, s).item() - 2 * math.log(2)) < 1e-9 for f in (adv_loss_generator, adv_loss_discriminator))


def _metric_arithmetic() -> bool:
    a = ImagePlane(np.zeros((16, 16, 1)), "byte", "Y")
    b = ImagePlane(np.full((16, 16, 1), 255.0), "byte", "Y")
    rgb = ImagePlane(np.random.default_rng(3).uniform(0, 255, (24, 24, 3)), "byte")
    return (abs(psnr(a, b, 4)) < 1e-12 and math.isinf(psnr(rgb, rgb)) and abs(ssim(rgb, rgb) - 1) < 1e-12
            and rmse_pirm(rgb, rgb) == 0.0)


def _kernel_partition_of_unity() -> bool:
    for scale in (0.25, 0.5, 2.0, 4.0):
        n_in = 16
        _, w = contributions(n_in, math.ceil(n_in * scale), scale)
        if np.abs(w.sum(axis=1) - 1).max() > 1e-12:
            return False
    return True


CHECKS: dict[str, Callable[[], bool]] = {
    "conv2d gradients": _grad_conv,
    "shared-parameter RCAB gradients": _grad_shared_rcab,
    "Charbonnier gradient at zero difference": _grad_charbonnier_at_zero,
    "RaGAN equilibrium 2 ln 2": _ragan_equilibrium,
    "PSNR/SSIM/RMSE arithmetic": _metric_arithmetic,
    "bicubic partition of unity": _kernel_partition_of_unity,
}


def run_selfcheck(emit: Callable[[str], None] = print) -> bool:
    all_ok = True
    for name, check in CHECKS.items():
        try:
            ok = bool(check())
        except Exception as exc:  # a crash is reported as a failure, not propagated
            ok = False
            name = f"{name} ({type(exc).__name__}: {exc})"
        all_ok &= ok
        emit(f"{'PASS' if ok else 'FAIL'} {name}")
    return all_ok
