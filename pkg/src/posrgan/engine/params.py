"""Named parameter storage that outlives any single tape."""

from __future__ import annotations

from typing import Iterator, Mapping, MutableMapping

import numpy as np

from ..errors import ContractError
from .tensor import Tensor


class ParameterStore(MutableMapping[str, Tensor]):
    """Ordered ``name -> Tensor`` map.

    Names are stable dotted paths (``blocks.3.conv.weight``) so checkpoints
    and optimizer state can be keyed by them. :meth:`scope` gives a prefixed
    view that reads and writes through to the parent store.
    """

    def __init__(self, tensors: Mapping[str, Tensor] | None = None, trainable: bool = True):
        self._items: dict[str, Tensor] = {}
        self.trainable = trainable
        for k, v in (tensors or {}).items():
            self[k] = v

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._items[name]
        except KeyError:
            raise KeyError(f"no parameter named {name!r}") from None

    def __setitem__(self, name: str, value: Tensor) -> None:
        if not isinstance(value, Tensor):
            value = Tensor(value)
        value.name = name
        value.requires_grad = self.trainable
        self._items[name] = value

    def __delitem__(self, name: str) -> None:
        del self._items[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        if name in self._items:
            raise ContractError(f"parameter {name!r} already defined")
        self[name] = Tensor(data)
        return self._items[name]

    def scope(self, prefix: str) -> "ScopedParams":
        return ScopedParams(self, prefix)

    def count(self) -> int:
        return sum(t.size for t in self._items.values())

    def arrays(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._items.items()}

    def load_arrays(self, arrays: Mapping[str, np.ndarray], strict: bool = True) -> None:
        """Overwrite parameter values in place from a name-keyed mapping."""
        missing = [k for k in self._items if k not in arrays]
        extra = [k for k in arrays if k not in self._items]
        if strict and (missing or extra):
            raise ContractError(f"parameter names differ: missing={missing[:5]} unexpected={extra[:5]}")
        for k, t in self._items.items():
            if k in arrays:
                src = np.asarray(arrays[k])
                if src.shape != t.shape:
                    raise ContractError(f"parameter {k!r}: stored shape {src.shape} != expected {t.shape}")
                t.data = np.ascontiguousarray(src, dtype=t.data.dtype).copy()

    def frozen(self) -> "ParameterStore":
        """Read-only twin sharing storage; nothing routed through it gets a gradient."""
        twin = ParameterStore(trainable=False)
        for k, t in self._items.items():
            twin._items[k] = t.detach()
        return twin

    def copy(self) -> "ParameterStore":
        twin = ParameterStore(trainable=self.trainable)
        for k, t in self._items.items():
            twin[k] = Tensor(t.data.copy())
        return twin

    def zero_grad(self) -> None:
        for t in self._items.values():
            t.grad = None


class ScopedParams(Mapping[str, Tensor]):
    """Prefix view onto a :class:`ParameterStore` (or another view)."""

    def __init__(self, root: Mapping[str, Tensor], prefix: str):
        self.root = root
        self.prefix = prefix if not prefix or prefix.endswith(".") else prefix + "."

    def __getitem__(self, name: str) -> Tensor:
        return self.root[self.prefix + name]

    def __iter__(self):
        n = len(self.prefix)
        return (k[n:] for k in self.root if k.startswith(self.prefix))

    def __len__(self) -> int:
        return sum(1 for _ in self)

    def add(self, name: str, data: np.ndarray) -> Tensor:
        return self.root.add(self.prefix + name, data)

    def scope(self, prefix: str) -> "ScopedParams":
        return ScopedParams(self.root, self.prefix + prefix)


def scoped(params: Mapping[str, Tensor], prefix: str) -> Mapping[str, Tensor]:
    if isinstance(params, ScopedParams):
        return params.scope(prefix)
    return ScopedParams(params, prefix)
