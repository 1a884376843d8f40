"""Binary embedding store shared by the clustering and retrieval stages.

Layout: magic "TEMB", u32 version, u32 count, u32 dim, then count*dim
little-endian 32-bit floats, row major. Row ids live in a sidecar text file
(`<path>.ids`), one patch id per line, aligned with the rows.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"TEMB"
VERSION = 1


def ids_path(store_path) -> Path:
    return Path(str(store_path) + ".ids")


def write_store(path, ids, vectors: np.ndarray) -> None:
    vectors = np.asarray(vectors, dtype=np.float32)
    if vectors.ndim != 2:
        raise ValueError("vectors must be a 2-d array")
    if len(ids) != vectors.shape[0]:
        raise ValueError(f"{len(ids)} ids for {vectors.shape[0]} rows")
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<III", VERSION, vectors.shape[0], vectors.shape[1]))
        fh.write(np.ascontiguousarray(vectors, dtype="<f4").tobytes())
    ids_path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def read_store(path) -> tuple[list[str], np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise ValueError(f"{path}: not an embedding store (magic {magic!r})")
        version, count, dim = struct.unpack("<III", fh.read(12))
        if version != VERSION:
            raise ValueError(f"{path}: unsupported store version {version}")
        vectors = np.frombuffer(fh.read(4 * count * dim), dtype="<f4").reshape(count, dim)
    ids = ids_path(path).read_text(encoding="utf-8").splitlines()
    if len(ids) != count:
        raise ValueError(f"{path}: sidecar has {len(ids)} ids for {count} rows")
    return ids, np.array(vectors)
