"""Binary parameter checkpoints.

Layout: magic ``GTCK1`` | u32 tensor count | per tensor:
u32 name length | name utf-8 | u32 rank | u32 dims[rank] | float32 payload.
All integers little-endian; payload is C order.  Entry order is preserved,
so writing the same mapping twice yields byte-identical files.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

CHECKPOINT_MAGIC = b"GTCK1"


class CheckpointError(Exception):
    pass


def write_checkpoint(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    chunks = [CHECKPOINT_MAGIC, struct.pack("<I", len(tensors))]
    for name, tensor in tensors.items():
        # ascontiguousarray promotes 0-dim arrays to 1-d; keep the true shape
        arr = np.ascontiguousarray(tensor, dtype="<f4").reshape(np.shape(tensor))
        encoded = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b"")
        chunks.append(arr.tobytes())
    Path(path).write_bytes(b"".join(chunks))


def read_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:5] != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: bad magic {raw[:5]!r}")
    (count,) = struct.unpack_from("<I", raw, 5)
    offset = 9
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        name = raw[offset:offset + name_len].decode("utf-8")
        offset += name_len
        (rank,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        dims = struct.unpack_from(f"<{rank}I", raw, offset) if rank else ()
        offset += 4 * rank
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        payload = raw[offset:offset + 4 * size]
        if len(payload) != 4 * size:
            raise CheckpointError(f"{path}: truncated payload for {name!r}")
        offset += 4 * size
        tensors[name] = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
    return tensors
