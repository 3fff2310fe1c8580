"""Binary record datasets: raw little-endian 8-byte records, no header.

Each record is a 4-byte unsigned key followed by a 4-byte payload.  The
benchmark generator emits keys 1..N shuffled by a seeded permutation so a
sorted result can be verified as exactly 1..N; payloads are derived from
the key so value integrity survives any reordering check.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

RECORD_BYTES = 8
_VALUE_MASK = 0xA5A5A5A5


class DatasetFormatError(ValueError):
    pass


@dataclass(frozen=True)
class DatasetSpec:
    records: int
    distribution: str = "permutation"  # or "uniform"
    seed: int = 0

    def __post_init__(self):
        if self.records < 1:
            raise ValueError("records must be positive")
        if self.distribution not in ("permutation", "uniform"):
            raise ValueError(f"unknown distribution {self.distribution!r}")


def generate(spec: DatasetSpec) -> np.ndarray:
    """Deterministic (n, 2) uint32 dataset for the given spec."""
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    out = np.empty((spec.records, 2), dtype=np.uint32)
    if spec.distribution == "permutation":
        keys = rng.permutation(np.arange(1, spec.records + 1, dtype=np.uint32))
    else:
        keys = rng.integers(0, 1 << 32, size=spec.records, dtype=np.uint32)
    out[:, 0] = keys
    out[:, 1] = keys ^ _VALUE_MASK
    return out


def save(records: np.ndarray, path: str):
    arr = np.ascontiguousarray(records, dtype="<u4")
    with open(path, "wb") as fh:
        arr.tofile(fh)


def load(path: str, mmap: bool = False) -> np.ndarray:
    size = os.path.getsize(path)
    if size % RECORD_BYTES:
        raise DatasetFormatError(
            f"{path}: size {size} is not a multiple of {RECORD_BYTES}-byte records"
        )
    n = size // RECORD_BYTES
    if mmap:
        return np.memmap(path, dtype="<u4", mode="r", shape=(n, 2))
    return np.fromfile(path, dtype="<u4").reshape(n, 2)


def payload_intact(records: np.ndarray) -> bool:
    """True when every value still matches its key's derived payload."""
    return bool(np.all(records[:, 1] == (records[:, 0] ^ np.uint32(_VALUE_MASK))))
