"""ADAM with bias correction, plus the step-halving learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .engine import ParameterStore
from .errors import ConfigError, NumericalError


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name, plus the step count."""

    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    def arrays(self) -> dict[str, np.ndarray]:
        out = {f"m/{k}": a for k, a in self.m.items()}
        out.update({f"v/{k}": a for k, a in self.v.items()})
        return out

    @classmethod
    def from_arrays(cls, arrays: Mapping[str, np.ndarray], step: int) -> "AdamState":
        m = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("m/")}
        v = {k[2:]: np.array(a) for k, a in arrays.items() if k.startswith("v/")}
        return cls(m, v, int(step))


def adam_step(params: ParameterStore, grads: Mapping[str, np.ndarray], state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    """In-place update of every parameter that has a gradient.

    Parameters absent from ``grads`` keep their values and moments; the step
    counter advances once per call.
    """
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NumericalError(f"non-finite gradient for parameter {name!r} at ADAM step {state.step + 1}")
        if name not in params:
            raise ConfigError(f"gradient for unknown parameter {name!r}")
        if params[name].shape != np.shape(g):
            raise ConfigError(f"gradient shape {np.shape(g)} does not match parameter {name!r} {params[name].shape}")
    state.step += 1
    t = state.step
    c1 = 1.0 - beta1 ** t
    c2 = 1.0 - beta2 ** t
    for name in params:
        g = grads.get(name)
        if g is None:
            continue
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(g)
            state.v[name] = np.zeros_like(g)
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        params[name].data -= lr * (m / c1) / (np.sqrt(v / c2) + eps)
    return state


def resolve_halving_points(points: Sequence[int], mode: str = "cumulative") -> list[int]:
    """Turn a configured halving list into absolute iteration numbers.

    ``cumulative`` reads the list as successive interval lengths,
    ``absolute`` as iteration numbers already.
    """
    pts = [int(p) for p in points]
    if mode == "cumulative":
        pts = [int(x) for x in np.cumsum(pts)] if pts else []
    elif mode != "absolute":
        raise ConfigError(f"unknown halving mode {mode!r}; use 'cumulative' or 'absolute'")
    if any(p < 1 for p in pts) or any(b <= a for a, b in zip(pts, pts[1:])):
        raise ConfigError(f"halving points must be positive and strictly increasing, got {pts}")
    return pts


def lr_at(iteration: int, lr_initial: float, halving_points: Sequence[int]) -> float:
    """Initial rate halved once for each absolute point that ``iteration`` has reached."""
    if iteration < 1:
        raise ConfigError(f"iterations are counted from 1, got {iteration}")
    drops = sum(1 for p in halving_points if iteration >= p)
    return lr_initial * 0.5 ** drops
