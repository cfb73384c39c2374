"""Differentiable operations on NCHW tensors.

Only the broadcasting the networks need is supported: a ``(1, 1, 1, 1)``
scalar tensor against anything, and an ``[N, C, 1, 1]`` channel descriptor
against ``[N, C, H, W]`` through :func:`channel_mul`.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from scipy.special import expit

from ..errors import DimensionError
from .tensor import Tensor, emit

SCALAR_SHAPE = (1, 1, 1, 1)


def _require_4d(x: Tensor, op: str) -> None:
    if x.data.ndim != 4:
        raise DimensionError(f"{op}: expected an NCHW tensor, got shape {x.shape}")


def _pair_kind(a: Tensor, b: Tensor, op: str) -> str:
    if a.shape == b.shape:
        return "same"
    if b.shape == SCALAR_SHAPE:
        return "b_scalar"
    if a.shape == SCALAR_SHAPE:
        return "a_scalar"
    raise DimensionError(f"{op}: incompatible shapes {a.shape} and {b.shape}")


def _reduce_to(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    return np.full(shape, g.sum())


def add(a: Tensor, b: Tensor) -> Tensor:
    _pair_kind(a, b, "add")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(g, b.shape)

    return emit("add", (a, b), a.data + b.data, backward)


def sub(a: Tensor, b: Tensor) -> Tensor:
    _pair_kind(a, b, "sub")

    def backward(g):
        return _reduce_to(g, a.shape), _reduce_to(-g, b.shape)

    return emit("sub", (a, b), a.data - b.data, backward)


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Hadamard product (or scalar-tensor scaling)."""
    _pair_kind(a, b, "mul")

    def backward(g):
        return _reduce_to(g * b.data, a.shape), _reduce_to(g * a.data, b.shape)

    return emit("mul", (a, b), a.data * b.data, backward)


def scale(x: Tensor, c: float) -> Tensor:
    return emit("scale", (x,), x.data * c, lambda g: (g * c,))


def add_const(x: Tensor, c: float) -> Tensor:
    return emit("add_const", (x,), x.data + c, lambda g: (g,))


def channel_mul(x: Tensor, d: Tensor) -> Tensor:
    """Scale every ``H x W`` plane of ``x`` by the matching entry of ``d``."""
    _require_4d(x, "channel_mul")
    n, c = x.shape[:2]
    if d.shape != (n, c, 1, 1):
        raise DimensionError(f"channel_mul: descriptor {d.shape} does not fit input {x.shape}")

    def backward(g):
        return g * d.data, (g * x.data).sum(axis=(2, 3), keepdims=True)

    return emit("channel_mul", (x, d), x.data * d.data, backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return emit("relu", (x,), np.where(mask, x.data, 0.0), lambda g: (g * mask,))


def leaky_relu(x: Tensor, negative_slope: float = 0.2) -> Tensor:
    factor = np.where(x.data >= 0, 1.0, negative_slope)
    return emit("leaky_relu", (x,), x.data * factor, lambda g: (g * factor,))


def sigmoid(x: Tensor) -> Tensor:
    y = expit(x.data)
    return emit("sigmoid", (x,), y, lambda g: (g * y * (1.0 - y),))


def square(x: Tensor) -> Tensor:
    return emit("square", (x,), x.data * x.data, lambda g: (2.0 * g * x.data,))


def sqrt(x: Tensor) -> Tensor:
    y = np.sqrt(x.data)
    return emit("sqrt", (x,), y, lambda g: (g * 0.5 / y,))


def abs(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    return emit("abs", (x,), np.abs(x.data), lambda g: (g * np.sign(x.data),))


def log(x: Tensor, floor: float = 1e-12) -> Tensor:
    """Natural log of ``max(x, floor)``; clamped entries pass no gradient."""
    live = x.data > floor
    safe = np.where(live, x.data, floor)
    return emit("log", (x,), np.log(safe), lambda g: (np.where(live, g / safe, 0.0),))


def mean_all(x: Tensor) -> Tensor:
    n = x.size
    out = np.full(SCALAR_SHAPE, x.data.sum() / n)
    return emit("mean_all", (x,), out, lambda g: (np.full(x.shape, g.item() / n),))


def sum_all(x: Tensor) -> Tensor:
    out = np.full(SCALAR_SHAPE, x.data.sum())
    return emit("sum_all", (x,), out, lambda g: (np.full(x.shape, g.item()),))


def global_avg_pool(x: Tensor) -> Tensor:
    _require_4d(x, "global_avg_pool")
    h, w = x.shape[2:]
    if h == 0 or w == 0:
        raise DimensionError(f"global_avg_pool: zero spatial extent in {x.shape}")
    out = x.data.mean(axis=(2, 3), keepdims=True)
    hw = h * w
    return emit("global_avg_pool", (x,), out, lambda g: (np.broadcast_to(g / hw, x.shape).copy(),))


def _shuffle(a: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = a.shape
    return a.reshape(n, c // (r * r), r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(
        n, c // (r * r), h * r, w * r)


def _unshuffle(a: np.ndarray, r: int) -> np.ndarray:
    n, c, h, w = a.shape
    return a.reshape(n, c, h // r, r, w // r, r).transpose(0, 1, 3, 5, 2, 4).reshape(
        n, c * r * r, h // r, w // r)


def pixel_shuffle(x: Tensor, r: int) -> Tensor:
    """``[N, C*r^2, H, W] -> [N, C, rH, rW]``; channel ``c*r^2 + i*r + j`` lands at offset ``(i, j)``."""
    _require_4d(x, "pixel_shuffle")
    if r < 1 or x.shape[1] % (r * r):
        raise DimensionError(f"pixel_shuffle: {x.shape[1]} channels not divisible by r^2={r * r}")
    return emit("pixel_shuffle", (x,), _shuffle(x.data, r), lambda g: (_unshuffle(g, r),))


def pixel_unshuffle(x: Tensor, r: int) -> Tensor:
    _require_4d(x, "pixel_unshuffle")
    if r < 1 or x.shape[2] % r or x.shape[3] % r:
        raise DimensionError(f"pixel_unshuffle: spatial extents {x.shape[2:]} not divisible by {r}")
    return emit("pixel_unshuffle", (x,), _unshuffle(x.data, r), lambda g: (_shuffle(g, r),))


def fully_connected(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Flatten each sample and apply ``weight @ x + bias``; returns ``[N, out, 1, 1]``."""
    _require_4d(x, "fully_connected")
    n = x.shape[0]
    flat = x.data.reshape(n, -1)
    out_f, in_f = weight.shape
    if flat.shape[1] != in_f:
        raise DimensionError(
            f"fully_connected: input {x.shape} flattens to {flat.shape[1]}, weight expects {in_f}")
    y = flat @ weight.data.T
    if bias is not None:
        if bias.shape != (out_f,):
            raise DimensionError(f"fully_connected: bias {bias.shape} vs {out_f} outputs")
        y = y + bias.data
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(n, out_f)
        gx = (g2 @ weight.data).reshape(x.shape)
        gw = g2.T @ flat
        return (gx, gw) if bias is None else (gx, gw, g2.sum(axis=0))

    return emit("fully_connected", inputs, y.reshape(n, out_f, 1, 1), backward)


def concat_batch(xs: Sequence[Tensor]) -> Tensor:
    """Stack tensors along the batch axis."""
    tail = xs[0].shape[1:]
    for t in xs:
        if t.shape[1:] != tail:
            raise DimensionError(f"concat_batch: {t.shape} does not match trailing extents {tail}")
    bounds = np.cumsum([0] + [t.shape[0] for t in xs])

    def backward(g):
        return tuple(g[bounds[i]:bounds[i + 1]] for i in range(len(xs)))

    return emit("concat_batch", tuple(xs), np.concatenate([t.data for t in xs], axis=0), backward)


def slice_batch(x: Tensor, start: int, stop: int) -> Tensor:
    if not 0 <= start < stop <= x.shape[0]:
        raise DimensionError(f"slice_batch: [{start}:{stop}] outside batch of {x.shape[0]}")

    def backward(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return emit("slice_batch", (x,), x.data[start:stop].copy(), backward)
