"""2-D convolution (cross-correlation) with zero padding.

Two GEMM-based paths share one contract:

``im2col``
    Unfold input patches into a ``[Cin*k*k, N*Ho*Wo]`` matrix and do one
    matrix product. Wins when the layer widens (``Cout >= Cin``) and is the
    only path for stride > 1.
``shift``
    Stride 1 only. Pad and flatten every channel of the whole batch into one
    row; each kernel tap ``(i, j)`` is then a constant column offset, so the
    output is ``k*k`` small GEMMs over views with no unfolded copy. Wins when
    the layer narrows, e.g. the final ``C -> 3`` layer at HR resolution.

:func:`conv2d_direct` is a loop-per-output-pixel reference used by the tests.
For stride 1 the input gradient is itself a convolution of the output
gradient with the flipped, transposed kernel, so it reuses the fast paths.
"""

from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import DTYPE, Tensor, emit


def output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _check(x_shape, w_shape, bias_shape, stride, padding):
    if len(x_shape) != 4 or len(w_shape) != 4:
        raise DimensionError(f"conv2d: input {x_shape} and weight {w_shape} must both be 4-D")
    cout, cin, kh, kw = w_shape
    if x_shape[1] != cin:
        raise DimensionError(f"conv2d: input {x_shape} has {x_shape[1]} channels, weight {w_shape} expects {cin}")
    if kh != kw:
        raise DimensionError(f"conv2d: only square kernels are supported, got weight {w_shape}")
    if bias_shape is not None and bias_shape != (cout,):
        raise DimensionError(f"conv2d: bias {bias_shape} does not match weight {w_shape}")
    if stride < 1 or padding < 0:
        raise DimensionError(f"conv2d: stride {stride} / padding {padding} out of range")
    ho = output_size(x_shape[2], kh, stride, padding)
    wo = output_size(x_shape[3], kw, stride, padding)
    if ho < 1 or wo < 1:
        raise DimensionError(f"conv2d: input {x_shape} too small for weight {w_shape} with padding {padding}")
    return ho, wo


def _pad_cn(x: np.ndarray, padding: int) -> np.ndarray:
    """``[N, C, H, W] -> [C, N, H+2p, W+2p]``."""
    n, c, h, w = x.shape
    xp = np.zeros((c, n, h + 2 * padding, w + 2 * padding), dtype=x.dtype)
    xp[:, :, padding:padding + h, padding:padding + w] = x.transpose(1, 0, 2, 3)
    return xp


def _im2col(x: np.ndarray, k: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    n, c = x.shape[:2]
    xp = _pad_cn(x, padding)
    cols = np.empty((c, k, k, n, ho, wo), dtype=x.dtype)
    hi, wi = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i:i + hi:stride, j:j + wi:stride]
    return cols.reshape(c * k * k, n * ho * wo)


def _col2im(cols: np.ndarray, x_shape, k: int, stride: int, padding: int, ho: int, wo: int) -> np.ndarray:
    n, c, h, w = x_shape
    cols = cols.reshape(c, k, k, n, ho, wo)
    gp = np.zeros((c, n, h + 2 * padding, w + 2 * padding), dtype=cols.dtype)
    hi, wi = stride * (ho - 1) + 1, stride * (wo - 1) + 1
    for i in range(k):
        for j in range(k):
            gp[:, :, i:i + hi:stride, j:j + wi:stride] += cols[:, i, j]
    return gp[:, :, padding:padding + h, padding:padding + w].transpose(1, 0, 2, 3)


class _ShiftLayout:
    """Geometry of the flattened, padded batch used by the shift path."""

    def __init__(self, x_shape, k: int, padding: int):
        n, c, h, w = x_shape
        self.n, self.c, self.h, self.w, self.k, self.p = n, c, h, w, k, padding
        self.hp, self.wp = h + 2 * padding, w + 2 * padding
        self.ho, self.wo = self.hp - k + 1, self.wp - k + 1
        self.block = self.hp * self.wp + k - 1
        self.m = n * self.block - ((k - 1) * self.wp + k - 1)

    def flatten(self, x: np.ndarray) -> np.ndarray:
        flat = np.zeros((self.c, self.n, self.block), dtype=x.dtype)
        p = self.p
        flat[:, :, :self.hp * self.wp].reshape(self.c, self.n, self.hp, self.wp)[
            :, :, p:p + self.h, p:p + self.w] = x.transpose(1, 0, 2, 3)
        return flat.reshape(self.c, self.n * self.block)

    def unflatten(self, flat: np.ndarray) -> np.ndarray:
        """``[O, N*block] -> [N, O, Ho, Wo]`` keeping only valid output columns."""
        o = flat.shape[0]
        grid = flat.reshape(o, self.n, self.block)[:, :, :self.ho * self.wp].reshape(o, self.n, self.ho, self.wp)
        return grid[..., :self.wo].transpose(1, 0, 2, 3)

    def embed(self, g: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`unflatten`: ``[N, O, Ho, Wo] -> [O, m]`` with zeros off-grid."""
        o = g.shape[1]
        flat = np.zeros((o, self.n, self.block), dtype=g.dtype)
        flat[:, :, :self.ho * self.wp].reshape(o, self.n, self.ho, self.wp)[..., :self.wo] = g.transpose(1, 0, 2, 3)
        return flat.reshape(o, self.n * self.block)[:, :self.m]

    def offsets(self):
        for i in range(self.k):
            for j in range(self.k):
                yield i, j, i * self.wp + j


def _shift_forward(x: np.ndarray, w: np.ndarray, padding: int):
    lay = _ShiftLayout(x.shape, w.shape[2], padding)
    flat = lay.flatten(x)
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    o = w.shape[0]
    out = np.zeros((o, lay.n * lay.block), dtype=x.dtype)
    acc = out[:, :lay.m]
    tmp = np.empty((o, lay.m), dtype=x.dtype)
    for i, j, s in lay.offsets():
        np.matmul(taps[i, j], flat[:, s:s + lay.m], out=tmp)
        acc += tmp
    return lay.unflatten(out), flat, lay


def _shift_weight_grad(g: np.ndarray, flat: np.ndarray, lay: _ShiftLayout, w_shape) -> np.ndarray:
    gf = lay.embed(g)
    gw = np.empty(w_shape, dtype=g.dtype)
    for i, j, s in lay.offsets():
        gw[:, :, i, j] = gf @ flat[:, s:s + lay.m].T
    return gw


def _pick(cin: int, cout: int, stride: int) -> str:
    return "shift" if stride == 1 and cout < cin else "im2col"


def _forward_data(x: np.ndarray, w: np.ndarray, stride: int, padding: int, method: str | None = None):
    """Bias-free forward; returns ``(out, saved)`` for the weight gradient."""
    cout, cin, k, _ = w.shape
    method = method or _pick(cin, cout, stride)
    if method == "shift":
        if stride != 1:
            raise DimensionError("conv2d: the shift path only supports stride 1")
        out, flat, lay = _shift_forward(x, w, padding)
        return np.ascontiguousarray(out), ("shift", flat, lay)
    if method != "im2col":
        raise ValueError(f"unknown conv2d method {method!r}")
    ho = output_size(x.shape[2], k, stride, padding)
    wo = output_size(x.shape[3], k, stride, padding)
    cols = _im2col(x, k, stride, padding, ho, wo)
    out = (w.reshape(cout, -1) @ cols).reshape(cout, x.shape[0], ho, wo).transpose(1, 0, 2, 3)
    return np.ascontiguousarray(out), ("im2col", cols, (ho, wo))


def _input_grad(g: np.ndarray, w: np.ndarray, x_shape, stride: int, padding: int) -> np.ndarray:
    k = w.shape[2]
    if stride == 1 and padding <= k - 1 and g.shape[2] + k - 1 - 2 * padding == x_shape[2]:
        flipped = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gx, _ = _forward_data(g, flipped, 1, k - 1 - padding)
        return gx
    ho, wo = g.shape[2:]
    g2 = g.transpose(1, 0, 2, 3).reshape(w.shape[0], -1)
    return _col2im(w.reshape(w.shape[0], -1).T @ g2, x_shape, k, stride, padding, ho, wo)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None, stride: int = 1,
           padding: int = 0, method: str | None = None) -> Tensor:
    """Zero-padded 2-D cross-correlation of ``[N, Cin, H, W]`` with ``[Cout, Cin, k, k]``.

    ``method`` forces ``"im2col"`` or ``"shift"``; by default the cheaper one
    for the channel counts is chosen. Both give the same result up to
    floating-point summation order.
    """
    _check(x.shape, weight.shape, None if bias is None else bias.shape, stride, padding)
    out, saved = _forward_data(x.data, weight.data, stride, padding, method)
    if bias is not None:
        out += bias.data.reshape(1, -1, 1, 1)
    inputs = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gx = _input_grad(g, weight.data, x.shape, stride, padding) if x.requires_grad else None
        if not weight.requires_grad:
            gw = None
        elif saved[0] == "shift":
            gw = _shift_weight_grad(g, saved[1], saved[2], weight.shape)
        else:
            g2 = g.transpose(1, 0, 2, 3).reshape(weight.shape[0], -1)
            gw = (g2 @ saved[1].T).reshape(weight.shape)
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=(0, 2, 3))

    return emit("conv2d", inputs, out, backward)


def conv2d_direct(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None,
                  stride: int = 1, padding: int = 0) -> np.ndarray:
    """Reference convolution: one explicit receptive-field sum per output pixel."""
    _check(x.shape, w.shape, None if b is None else b.shape, stride, padding)
    n, c, h, wd = x.shape
    cout, _, k, _ = w.shape
    ho = output_size(h, k, stride, padding)
    wo = output_size(wd, k, stride, padding)
    xp = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=DTYPE)
    xp[:, :, padding:padding + h, padding:padding + wd] = x
    out = np.zeros((n, cout, ho, wo), dtype=DTYPE)
    for r in range(ho):
        for q in range(wo):
            patch = xp[:, :, r * stride:r * stride + k, q * stride:q * stride + k]
            out[:, :, r, q] = np.einsum("nckl,ockl->no", patch, w)
    if b is not None:
        out += b.reshape(1, -1, 1, 1)
    return out
