"""Named-tensor checkpoint file format.

Layout: magic bytes "FRE1", then repeated records of
[name_len: u32 LE][name: utf-8][rank: u32 LE][dims: u32 LE each]
[payload: little-endian f32, row-major].  Round trips are bit-exact.

Arbitrary byte strings (the embedded JSON config) ride along as rank-1
records whose payload is the raw bytes space-padded to a multiple of 4
and reinterpreted as f32; :func:`bytes_to_record` / :func:`record_to_bytes`
convert in both directions without touching the bits.
"""

from __future__ import annotations

import struct

import numpy as np

MAGIC = b"FRE1"

__all__ = [
    "CheckpointError",
    "write_checkpoint",
    "read_checkpoint",
    "bytes_to_record",
    "record_to_bytes",
]


class CheckpointError(Exception):
    """Malformed, truncated, or wrong-version checkpoint file."""


def write_checkpoint(path, records: dict[str, np.ndarray]):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for name, arr in records.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            name_b = name.encode("utf-8")
            fh.write(struct.pack("<I", len(name_b)))
            fh.write(name_b)
            fh.write(struct.pack("<I", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<I", dim))
            fh.write(arr.tobytes(order="C"))


def read_checkpoint(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != MAGIC:
        raise CheckpointError(
            f"not a FRE1 checkpoint (magic {blob[:4]!r}); refusing to load"
        )
    records: dict[str, np.ndarray] = {}
    off = 4

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(blob):
            raise CheckpointError(f"truncated checkpoint while reading {what}")
        piece = blob[off : off + n]
        off += n
        return piece

    while off < len(blob):
        (name_len,) = struct.unpack("<I", take(4, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, "rank"))
        dims = [struct.unpack("<I", take(4, "dim"))[0] for _ in range(rank)]
        count = int(np.prod(dims, dtype=np.int64)) if dims else 1
        payload = take(4 * count, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(dims).copy()
        records[name] = arr
    return records


def bytes_to_record(data: bytes) -> np.ndarray:
    padded = data + b" " * (-len(data) % 4)
    return np.frombuffer(padded, dtype="<f4").copy()


def record_to_bytes(arr: np.ndarray) -> bytes:
    return np.ascontiguousarray(arr, dtype="<f4").tobytes()
