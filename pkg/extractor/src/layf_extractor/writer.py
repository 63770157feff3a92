"""Standalone writer for the LAYF stream wire format.

This is the extractor's half of the cross-package contract: a fixed
little-endian header (magic ``LAYF``, version 1, layer count, per-layer
dims, sample count, class count, dtype tag), then one record per sample
(label u32, task id u32, layer vectors in order, no padding), plus a
sibling JSON manifest carrying stream metadata and a 64-bit FNV-1a
checksum of the payload. Kept dependency-free on the engine package on
purpose; the engine's reader validates these files in tests.
"""

from __future__ import annotations

import json
import struct
from typing import Sequence

import numpy as np

MAGIC = b"LAYF"
VERSION = 1
DTYPE_TAGS = {"float32": 0, "float64": 1}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, value: int = _FNV_OFFSET) -> int:
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _U64
    return value


class StreamWriter:
    """Buffering writer: collect (per-layer vectors, label, task id) rows,
    then flush header, records, and manifest in one go."""

    def __init__(self, layer_dims: Sequence[int], num_classes: int, dtype: str = "float32"):
        if dtype not in DTYPE_TAGS:
            raise ValueError(f"dtype must be float32 or float64, got {dtype!r}")
        self.layer_dims = [int(d) for d in layer_dims]
        self.num_classes = int(num_classes)
        self.dtype = dtype
        self._np_dtype = np.dtype("<f4" if dtype == "float32" else "<f8")
        self._rows: list[tuple[list[np.ndarray], int, int]] = []

    def add(self, layer_vectors: Sequence[np.ndarray], label: int, task_id: int) -> None:
        if len(layer_vectors) != len(self.layer_dims):
            raise ValueError(
                f"sample has {len(layer_vectors)} layers, writer expects {len(self.layer_dims)}"
            )
        vectors = []
        for l, (vec, want) in enumerate(zip(layer_vectors, self.layer_dims), start=1):
            arr = np.asarray(vec, dtype=np.float64).reshape(-1)
            if arr.shape[0] != want:
                raise ValueError(f"layer {l} has dimension {arr.shape[0]}, expected {want}")
            if not np.isfinite(arr).all():
                raise ValueError(f"layer {l} contains non-finite values")
            vectors.append(arr)
        if not 0 <= label < self.num_classes:
            raise ValueError(f"label {label} out of range for {self.num_classes} classes")
        if task_id < 0:
            raise ValueError(f"task_id must be non-negative, got {task_id}")
        self._rows.append((vectors, int(label), int(task_id)))

    def write(
        self,
        path,
        task_label_spaces: Sequence[Sequence[int]],
        source: str = "",
    ) -> None:
        """Flush everything. ``task_label_spaces`` is the declared
        class-to-task partition (its union must cover all classes); the
        buffered rows must stay within it."""
        spaces = [sorted(int(y) for y in ys) for ys in task_label_spaces]
        union = set().union(*map(set, spaces)) if spaces else set()
        if union != set(range(self.num_classes)):
            raise ValueError(
                f"task label spaces must cover exactly classes 0..{self.num_classes - 1}"
            )
        task_sizes = [0] * len(spaces)
        for _, label, task_id in self._rows:
            if task_id >= len(spaces):
                raise ValueError(f"sample tagged task {task_id}, partition has {len(spaces)} tasks")
            if label not in spaces[task_id]:
                raise ValueError(f"label {label} outside task {task_id}'s declared label space")
            task_sizes[task_id] += 1

        num_layers = len(self.layer_dims)
        header = (
            MAGIC
            + struct.pack("<II", VERSION, num_layers)
            + struct.pack(f"<{num_layers}I", *self.layer_dims)
            + struct.pack("<QII", len(self._rows), self.num_classes, DTYPE_TAGS[self.dtype])
        )
        checksum = _FNV_OFFSET
        with open(path, "wb") as fh:
            fh.write(header)
            for vectors, label, task_id in self._rows:
                record = struct.pack("<II", label, task_id)
                for arr in vectors:
                    record += arr.astype(self._np_dtype).tobytes()
                checksum = fnv1a64(record, checksum)
                fh.write(record)
        manifest = {
            "num_layers": num_layers,
            "layer_dims": self.layer_dims,
            "num_classes": self.num_classes,
            "task_sizes": task_sizes,
            "task_label_spaces": spaces,
            "source": source,
            "sample_count": len(self._rows),
            "dtype": self.dtype,
            "checksum_fnv1a64": f"{checksum:016x}",
        }
        with open(f"{path}.manifest.json", "w", encoding="utf-8") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True)
            fh.write("\n")
