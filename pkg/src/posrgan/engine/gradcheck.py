"""Central finite-difference verification of tape gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tape, Tensor


@dataclass
class GradCheckReport:
    rtol: float
    step: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def max_rel_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.rtol

    def __str__(self) -> str:
        worst = max(self.errors, key=self.errors.get) if self.errors else "-"
        status = "ok" if self.passed else "FAIL"
        return f"gradcheck {status}: max rel err {self.max_rel_error:.3e} (worst {worst}, rtol {self.rtol:g})"


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Max-norm error scaled by the larger max-norm of the two gradients."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale < 1e-300:
        return 0.0
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def numeric_gradient(f: Callable[[], Tensor], t: Tensor, step: float = 1e-4) -> np.ndarray:
    flat = t.data.reshape(-1)
    grad = np.zeros(flat.size)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        up = f().item()
        flat[i] = orig - step
        down = f().item()
        flat[i] = orig
        grad[i] = (up - down) / (2 * step)
    return grad.reshape(t.shape)


def finite_diff_check(f: Callable[[], Tensor], params: Sequence[Tensor], rtol: float = 1e-4,
                      step: float = 1e-4) -> GradCheckReport:
    """Compare tape gradients of the scalar ``f()`` against central differences.

    ``f`` must be deterministic and rebuild its graph on every call; the
    tensors in ``params`` are perturbed in place and restored afterwards.
    """
    for t in params:
        t.requires_grad = True
    with Tape() as tape:
        loss = f()
    # a loss that never touched a parameter was not recorded: its gradient is zero
    grads = tape.backward(loss) if loss.requires_grad else {}
    report = GradCheckReport(rtol=rtol, step=step)
    for idx, t in enumerate(params):
        analytic = grads.get(t, np.zeros_like(t.data))
        numeric = numeric_gradient(f, t, step)
        report.errors[t.name or f"param[{idx}]"] = relative_error(analytic, numeric)
    return report
