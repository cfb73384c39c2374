"""Tensor value type and the append-only autodiff tape.

Activations are dense NCHW arrays. Parameters keep their natural shapes
(conv weights ``[Cout, Cin, kh, kw]``, biases ``[Cout]``, dense weights
``[out, in]``). Every operation executed while a :class:`Tape` is active and
touching a tensor with ``requires_grad`` appends one node to that tape;
:meth:`Tape.backward` walks the nodes once, newest first.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from ..errors import ContractError, DimensionError, NumericalError

_PRECISIONS = {"float64": np.float64, "double": np.float64, "float32": np.float32, "single": np.float32}

#: Floating dtype used for all engine arithmetic. Double by default; set the
#: ``POSRGAN_PRECISION=float32`` environment variable before import for single.
DTYPE = _PRECISIONS[os.environ.get("POSRGAN_PRECISION", "float64").lower()]

#: When true, every op output is scanned and a NaN/Inf raises NumericalError.
CHECK_FINITE = True

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "stack", None)
    if stack is None:
        stack = _local.stack = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    return stack[-1] if stack else None


def check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        bad = int(arr.size - np.count_nonzero(np.isfinite(arr)))
        raise NumericalError(f"{what}: {bad} non-finite value(s) of {arr.size}")


class Tensor:
    """Dense array plus an optional handle into the active tape."""

    __slots__ = ("data", "requires_grad", "grad", "tape_id", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.ascontiguousarray(data, dtype=DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self.tape_id: int | None = None
        self.name = name

    @classmethod
    def scalar(cls, value: float, requires_grad: bool = False) -> "Tensor":
        return cls(np.full((1, 1, 1, 1), value), requires_grad=requires_grad)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        """Same storage, cut off from the tape."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.requires_grad = False
        out.grad = None
        out.tape_id = None
        out.name = self.name
        return out

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{label}, requires_grad={self.requires_grad})"

    # arithmetic sugar; the op implementations live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        if isinstance(other, Tensor):
            return ops.mul(self, other)
        return ops.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self):
        from . import ops
        return ops.scale(self, -1.0)


@dataclass
class Node:
    kind: str
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: Callable[[np.ndarray], Sequence[np.ndarray | None]]


class Tape:
    """Append-only record of one forward pass.

    A tape is single use: after :meth:`backward` it refuses further
    recording or a second backward. Use it as a context manager so ops
    executed inside the ``with`` block are recorded::

        with Tape() as tape:
            loss = ops.mean_all(ops.mul(w, x))
        grads = tape.backward(loss)
    """

    def __init__(self):
        self.nodes: list[Node] = []
        self.consumed = False

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        stack = _tape_stack()
        if stack and stack[-1] is self:
            stack.pop()
        elif self in stack:
            stack.remove(self)

    def record(self, kind: str, inputs: tuple[Tensor, ...], output: Tensor, backward) -> None:
        if self.consumed:
            raise ContractError("tape already consumed by backward(); open a new Tape")
        output.tape_id = len(self.nodes)
        self.nodes.append(Node(kind, inputs, output, backward))

    def backward(self, loss: Tensor) -> dict[Tensor, np.ndarray]:
        """Reverse sweep from a scalar loss.

        Returns ``{leaf: dLoss/dLeaf}`` for every ``requires_grad`` leaf the
        loss depends on, and accumulates the same arrays into ``leaf.grad``.
        A leaf consumed by several ops receives the sum of its contributions.
        """
        if self.consumed:
            raise ContractError("backward() called twice on the same tape")
        if loss.data.size != 1:
            raise ContractError(f"backward() needs a scalar loss, got shape {loss.shape}")
        tid = loss.tape_id
        if tid is None or tid >= len(self.nodes) or self.nodes[tid].output is not loss:
            raise ContractError("loss was not produced on this tape")
        self.consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        leaves: dict[int, Tensor] = {}
        for node in reversed(self.nodes[: tid + 1]):
            g = grads.pop(id(node.output), None)
            if g is None:
                continue
            for t, gi in zip(node.inputs, node.backward(g)):
                if gi is None or not t.requires_grad:
                    continue
                key = id(t)
                if gi.shape != t.data.shape:
                    raise DimensionError(
                        f"{node.kind} backward produced gradient {gi.shape} for input {t.shape}")
                prev = grads.get(key)
                grads[key] = gi if prev is None else prev + gi
                if t.tape_id is None:
                    leaves[key] = t
        out: dict[Tensor, np.ndarray] = {}
        for key, leaf in leaves.items():
            g = grads[key]
            leaf.grad = g.copy() if leaf.grad is None else leaf.grad + g
            out[leaf] = g
        self.nodes.clear()
        return out


def emit(kind: str, inputs: tuple[Tensor, ...], data: np.ndarray, backward) -> Tensor:
    """Wrap an op result and record it on the active tape when needed."""
    if CHECK_FINITE:
        check_finite(data, kind)
    out = Tensor.__new__(Tensor)
    out.data = data if data.dtype == DTYPE else data.astype(DTYPE)
    out.grad = None
    out.tape_id = None
    out.name = None
    tape = active_tape()
    out.requires_grad = tape is not None and any(t.requires_grad for t in inputs)
    if out.requires_grad:
        tape.record(kind, inputs, out, backward)
    return out


def nan_scan(tensors: Iterable[Tensor]) -> list[str]:
    """Names (or reprs) of tensors whose data or grad holds a non-finite value."""
    dirty = []
    for i, t in enumerate(tensors):
        for arr in (t.data, t.grad):
            if arr is not None and not np.isfinite(arr).all():
                dirty.append(t.name or f"tensor[{i}]")
                break
    return dirty
