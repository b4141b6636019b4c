"""Parameter checkpoint file format.

Binary layout, little-endian:

    magic "SSWT"
    u32 tensor count
    per tensor: u32 rank, u32 dims..., then prod(dims) float64 values

Tensor names and the training/model configuration are echoed to a JSON
sidecar at ``<path>.json``; the binary file carries shapes only. Writes are
atomic (temp file + rename) so partial checkpoints are never parseable.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor
from .dataio import atomic_write_bytes

MAGIC = b"SSWT"


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_checkpoint(path, params: dict[str, Tensor], sidecar: dict) -> None:
    """Write parameters in canonical dict order plus the JSON sidecar."""
    path = Path(path)
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(params))
    for tensor in params.values():
        arr = np.ascontiguousarray(tensor.data, dtype="<f8")
        blob += struct.pack("<I", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += arr.tobytes()
    atomic_write_bytes(path, bytes(blob))
    doc = {"format": "SSWT", "tensors": list(params.keys())}
    doc.update(sidecar)
    atomic_write_bytes(sidecar_path(path), (json.dumps(doc, indent=2) + "\n").encode())


def load_checkpoint(path) -> tuple[dict[str, Tensor], dict]:
    """Read a checkpoint and its sidecar back into named tensors."""
    path = Path(path)
    if not path.exists():
        raise ValueError(f"checkpoint not found: {path}")
    side = sidecar_path(path)
    if not side.exists():
        raise ValueError(f"checkpoint sidecar not found: {side}")
    with open(side, encoding="utf-8") as fh:
        doc = json.load(fh)
    names = doc.get("tensors")
    if not isinstance(names, list):
        raise ValueError(f"sidecar {side} lacks the tensor name list")

    data = path.read_bytes()
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(data):
            raise ValueError(
                f"truncated checkpoint {path}: needed {offset + n} bytes for "
                f"{what}, file has {len(data)}"
            )
        chunk = data[offset : offset + n]
        offset += n
        return chunk

    if take(4, "magic") != MAGIC:
        raise ValueError(f"bad magic in {path}: expected {MAGIC!r} at byte 0")
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    if count != len(names):
        raise ValueError(
            f"checkpoint holds {count} tensors but sidecar names {len(names)}"
        )
    params: dict[str, Tensor] = {}
    for name in names:
        (rank,) = struct.unpack("<I", take(4, f"rank of {name}"))
        shape = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name}"))
        n_values = int(np.prod(shape, dtype=np.int64)) if rank else 1
        raw = take(8 * n_values, f"values of {name}")
        arr = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
        params[name] = Tensor(arr)
    if offset != len(data):
        raise ValueError(
            f"checkpoint {path} has {len(data) - offset} trailing bytes after "
            f"the last tensor (expected size {offset})"
        )
    return params, doc
