"""Versioned binary container for parameters, optimizer state and loop state.

Layout::

    b"POSRCKPT" | u32 format version | u64 header length | JSON header | raw arrays

The JSON header lists every array with its name, shape, dtype and byte
offset (relative to the start of the data section, 8-byte aligned). Arrays
are stored little-endian, so a round trip is bit exact.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import numpy as np

from .errors import ContractError

MAGIC = b"POSRCKPT"
FORMAT_VERSION = 1
_PREAMBLE = struct.Struct("<8sIQ")


@dataclass
class Checkpoint:
    arrays: dict[str, np.ndarray] = field(default_factory=dict)
    iteration: int = 0
    rng_state: dict | None = None
    config_hash: str = ""
    meta: dict[str, Any] = field(default_factory=dict)

    def group(self, prefix: str) -> dict[str, np.ndarray]:
        """Arrays under ``prefix/`` with the prefix stripped."""
        p = prefix.rstrip("/") + "/"
        return {k[len(p):]: v for k, v in self.arrays.items() if k.startswith(p)}

    def put_group(self, prefix: str, arrays: Mapping[str, np.ndarray]) -> None:
        p = prefix.rstrip("/") + "/"
        for k, v in arrays.items():
            self.arrays[p + k] = np.array(v, copy=True)

    def has_group(self, prefix: str) -> bool:
        p = prefix.rstrip("/") + "/"
        return any(k.startswith(p) for k in self.arrays)


def config_hash(config: Mapping[str, Any]) -> str:
    blob = json.dumps(config, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> Path:
    path = Path(path)
    entries, blobs, offset = [], [], 0
    for name, arr in ckpt.arrays.items():
        a = np.asarray(arr)
        le = a.astype(a.dtype.newbyteorder("<"), copy=False)
        raw = np.ascontiguousarray(le).tobytes()
        entries.append({"name": name, "shape": list(a.shape), "dtype": le.dtype.str,
                        "offset": offset, "nbytes": len(raw)})
        pad = (-len(raw)) % 8
        blobs.append(raw + b"\0" * pad)
        offset += len(raw) + pad
    header = {"format_version": FORMAT_VERSION, "iteration": int(ckpt.iteration),
              "rng_state": ckpt.rng_state, "config_hash": ckpt.config_hash,
              "meta": ckpt.meta, "arrays": entries}
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    hbytes += b" " * ((-(len(hbytes) + _PREAMBLE.size)) % 8)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(_PREAMBLE.pack(MAGIC, FORMAT_VERSION, len(hbytes)))
            fh.write(hbytes)
            for b in blobs:
                fh.write(b)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def load_checkpoint(path: str | Path) -> Checkpoint:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise OSError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(blob) < _PREAMBLE.size:
        raise ContractError(f"{path}: truncated checkpoint")
    magic, version, hlen = _PREAMBLE.unpack_from(blob)
    if magic != MAGIC:
        raise ContractError(f"{path}: not a checkpoint file")
    if version > FORMAT_VERSION:
        raise ContractError(f"{path}: format version {version} is newer than supported {FORMAT_VERSION}")
    start = _PREAMBLE.size
    header = json.loads(blob[start:start + hlen].decode("utf-8"))
    data = memoryview(blob)[start + hlen:]
    arrays = {}
    for e in header["arrays"]:
        raw = data[e["offset"]:e["offset"] + e["nbytes"]]
        arr = np.frombuffer(raw, dtype=np.dtype(e["dtype"])).reshape(e["shape"])
        arrays[e["name"]] = arr.astype(arr.dtype.newbyteorder("="), copy=True)
    return Checkpoint(arrays=arrays, iteration=header["iteration"], rng_state=header.get("rng_state"),
                      config_hash=header.get("config_hash", ""), meta=header.get("meta", {}))
