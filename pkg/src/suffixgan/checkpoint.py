"""Self-describing checkpoint container.

Layout: an 8-byte magic, a little-endian u64 header length, a JSON header
and then the raw tensor bytes in header order. The JSON header holds the
nested state structure with tensors replaced by ``{"__tensor__": i}``
references into the ``tensors`` table (dtype, shape, offset, nbytes).
Writing the same state twice yields identical bytes.
"""
from __future__ import annotations

import hashlib
import json
import struct
from pathlib import Path
from typing import Any

import numpy as np
import torch

MAGIC = b"SFXGAN\x00\x01"
VERSION = 1


def _flatten(obj: Any, tensors: list[torch.Tensor]) -> Any:
    if torch.is_tensor(obj):
        tensors.append(obj.detach().cpu().contiguous())
        return {"__tensor__": len(tensors) - 1}
    if isinstance(obj, dict):
        return {"__dict__": [[k, _flatten(v, tensors)] for k, v in obj.items()]}
    if isinstance(obj, (list, tuple)):
        return {"__list__": [_flatten(v, tensors) for v in obj], "tuple": isinstance(obj, tuple)}
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def _unflatten(obj: Any, tensors: list[torch.Tensor]) -> Any:
    if isinstance(obj, dict):
        if "__tensor__" in obj:
            return tensors[obj["__tensor__"]]
        if "__dict__" in obj:
            return {k: _unflatten(v, tensors) for k, v in obj["__dict__"]}
        if "__list__" in obj:
            items = [_unflatten(v, tensors) for v in obj["__list__"]]
            return tuple(items) if obj.get("tuple") else items
    return obj


def save_checkpoint(path: str | Path, state: dict, meta: dict) -> str:
    """Write ``state`` (nested dicts/lists of tensors) plus JSON ``meta``; returns the sha256."""
    tensors: list[torch.Tensor] = []
    structure = _flatten(state, tensors)
    table, offset = [], 0
    blobs = []
    for t in tensors:
        raw = t.numpy().tobytes()
        table.append({"dtype": str(t.dtype).removeprefix("torch."), "shape": list(t.shape),
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = json.dumps({"version": VERSION, "meta": meta, "state": structure, "tensors": table},
                        sort_keys=True, separators=(",", ":")).encode("utf-8")
    payload = MAGIC + struct.pack("<Q", len(header)) + header + b"".join(blobs)
    Path(path).write_bytes(payload)
    return hashlib.sha256(payload).hexdigest()


def load_checkpoint(path: str | Path) -> tuple[dict, dict]:
    """Return ``(state, meta)`` from a file written by :func:`save_checkpoint`."""
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path}: not a checkpoint file")
    (hlen,) = struct.unpack("<Q", data[8:16])
    header = json.loads(data[16:16 + hlen])
    if header["version"] != VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {header['version']}")
    base = 16 + hlen
    tensors = []
    for entry in header["tensors"]:
        dtype = getattr(torch, entry["dtype"])
        np_dtype = torch.empty(0, dtype=dtype).numpy().dtype
        buf = data[base + entry["offset"]: base + entry["offset"] + entry["nbytes"]]
        arr = np.frombuffer(buf, dtype=np_dtype).reshape(entry["shape"]).copy()
        tensors.append(torch.from_numpy(arr))
    return _unflatten(header["state"], tensors), header["meta"]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
