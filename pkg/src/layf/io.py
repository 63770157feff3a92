"""Bit-exact on-disk format for feature streams and engine checkpoints.

Stream layout: a fixed little-endian header (magic ``LAYF``, version,
layer count, per-layer dims, sample count, class count, dtype tag),
followed by one interleaved record per sample: label (u32), task id
(u32), then the layer vectors in order with no padding. A sibling JSON
manifest carries the stream metadata and an FNV-1a checksum of the
payload. float32 on disk by default; everything widens to float64 in
memory.

Checkpoints (magic ``LAYC``) persist accumulators and classifiers under
the same endianness rules, with the checksum embedded in the header.
"""

from __future__ import annotations

import json
import os
import struct
from typing import Iterable, Iterator

import numpy as np

from .accumulator import StatAccumulator
from .core import LayerFeatureSample, StreamManifest, TaskStream, validate_sample
from .errors import (
    ContractError,
    CorruptionError,
    FormatError,
    UnsupportedVersionError,
)
from .solver import FACTORIZED_SOLVE, PSEUDO_INVERSE, RidgeClassifier

STREAM_MAGIC = b"LAYF"
CHECKPOINT_MAGIC = b"LAYC"
FORMAT_VERSION = 1

DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
DTYPE_NAMES = {"float32": 0, "float64": 1}

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def fnv1a64(data: bytes, value: int = _FNV_OFFSET) -> int:
    """64-bit FNV-1a, resumable via ``value`` for chunked input."""
    for byte in data:
        value = ((value ^ byte) * _FNV_PRIME) & _U64_MASK
    return value


def _header_bytes(manifest: StreamManifest, sample_count: int, dtype_tag: int) -> bytes:
    return (
        STREAM_MAGIC
        + struct.pack("<II", FORMAT_VERSION, manifest.num_layers)
        + struct.pack(f"<{manifest.num_layers}I", *manifest.layer_dims)
        + struct.pack("<QII", sample_count, manifest.num_classes, dtype_tag)
    )


def _header_size(num_layers: int) -> int:
    return 28 + 4 * num_layers


def _record_size(layer_dims: tuple[int, ...], dtype: np.dtype) -> int:
    return 8 + dtype.itemsize * sum(layer_dims)


def manifest_path(stream_path) -> str:
    return f"{stream_path}.manifest.json"


def _manifest_to_dict(manifest: StreamManifest) -> dict:
    return {
        "num_layers": manifest.num_layers,
        "layer_dims": list(manifest.layer_dims),
        "num_classes": manifest.num_classes,
        "task_sizes": list(manifest.task_sizes),
        "task_label_spaces": [sorted(ys) for ys in manifest.task_label_spaces],
        "source": manifest.source,
    }


def _manifest_from_dict(d: dict) -> StreamManifest:
    try:
        return StreamManifest(
            num_layers=int(d["num_layers"]),
            layer_dims=tuple(d["layer_dims"]),
            num_classes=int(d["num_classes"]),
            task_sizes=tuple(d["task_sizes"]),
            task_label_spaces=tuple(frozenset(ys) for ys in d["task_label_spaces"]),
            source=str(d.get("source", "")),
        )
    except KeyError as exc:
        raise FormatError(f"manifest is missing required field {exc}") from exc


def write_stream(
    samples: Iterable[LayerFeatureSample],
    manifest: StreamManifest,
    path,
    dtype: str = "float32",
) -> None:
    """Write samples plus the sibling JSON manifest.

    All samples are validated against the manifest before the header is
    written, so a contract violation never leaves a file behind.
    """
    if dtype not in DTYPE_NAMES:
        raise ValueError(f"dtype must be one of {sorted(DTYPE_NAMES)}, got {dtype!r}")
    tag = DTYPE_NAMES[dtype]
    np_dtype = DTYPE_TAGS[tag]
    samples = list(samples)
    for n, sample in enumerate(samples):
        report = validate_sample(sample, manifest)
        if report is not None:
            raise ContractError(f"sample {n}: {report}")

    checksum = _FNV_OFFSET
    with open(path, "wb") as fh:
        fh.write(_header_bytes(manifest, len(samples), tag))
        for sample in samples:
            record = struct.pack("<II", sample.label, sample.task_id)
            for vec in sample.layer_features:
                record += np.ascontiguousarray(vec, dtype=np_dtype).tobytes()
            checksum = fnv1a64(record, checksum)
            fh.write(record)

    meta = _manifest_to_dict(manifest)
    meta["sample_count"] = len(samples)
    meta["dtype"] = dtype
    meta["checksum_fnv1a64"] = f"{checksum:016x}"
    with open(manifest_path(path), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _parse_header(raw: bytes, path) -> tuple[int, tuple[int, ...], int, int, np.dtype]:
    if len(raw) < 12:
        raise CorruptionError(f"{path}: file shorter than the fixed header (12 bytes)")
    if raw[:4] != STREAM_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}, expected {STREAM_MAGIC!r}")
    version, num_layers = struct.unpack("<II", raw[4:12])
    if version > FORMAT_VERSION:
        raise UnsupportedVersionError(f"{path}: version {version} is newer than {FORMAT_VERSION}")
    if version < 1:
        raise FormatError(f"{path}: invalid version {version}")
    if num_layers < 1:
        raise FormatError(f"{path}: invalid layer count {num_layers}")
    want = _header_size(num_layers)
    if len(raw) < want:
        raise CorruptionError(f"{path}: truncated header at byte {len(raw)}, need {want}")
    dims = struct.unpack(f"<{num_layers}I", raw[12 : 12 + 4 * num_layers])
    sample_count, class_count, tag = struct.unpack("<QII", raw[12 + 4 * num_layers : want])
    if tag not in DTYPE_TAGS:
        raise FormatError(f"{path}: unknown dtype tag {tag}")
    return sample_count, dims, class_count, tag, DTYPE_TAGS[tag]


def _read_header(fh, path):
    head = fh.read(12)
    if len(head) < 12 or head[:4] != STREAM_MAGIC:
        return _parse_header(head, path)  # raises the right error
    num_layers = struct.unpack("<I", head[8:12])[0]
    rest = fh.read(max(0, _header_size(max(num_layers, 1)) - 12))
    return _parse_header(head + rest, path)


def read_stream(path) -> tuple[StreamManifest, Iterator[LayerFeatureSample]]:
    """Open a stream file and return its manifest plus a lazy sample iterator.

    Magic, version, declared length, and payload checksum are all
    validated before the first sample is yielded; iteration then reads
    one record at a time, so memory stays bounded by a single record.
    """
    with open(manifest_path(path), "r", encoding="utf-8") as fh:
        meta = json.load(fh)
    manifest = _manifest_from_dict(meta)

    with open(path, "rb") as fh:
        sample_count, dims, class_count, tag, np_dtype = _read_header(fh, path)
        header_size = _header_size(len(dims))
        if tuple(dims) != manifest.layer_dims or class_count != manifest.num_classes:
            raise FormatError(
                f"{path}: header (dims={dims}, C={class_count}) disagrees with manifest "
                f"(dims={manifest.layer_dims}, C={manifest.num_classes})"
            )
        if int(meta.get("sample_count", sample_count)) != sample_count:
            raise FormatError(
                f"{path}: header declares {sample_count} samples, manifest "
                f"{meta.get('sample_count')}"
            )
        record_size = _record_size(manifest.layer_dims, np_dtype)
        expected = header_size + sample_count * record_size
        actual = os.fstat(fh.fileno()).st_size
        if actual != expected:
            raise CorruptionError(
                f"{path}: expected {expected} bytes, found {actual}; file damaged "
                f"at byte offset {min(actual, expected)}"
            )
        checksum = _FNV_OFFSET
        while True:
            chunk = fh.read(1 << 20)
            if not chunk:
                break
            checksum = fnv1a64(chunk, checksum)

    declared = meta.get("checksum_fnv1a64")
    if declared is not None and int(declared, 16) != checksum:
        raise CorruptionError(
            f"{path}: payload checksum {checksum:016x} does not match declared "
            f"{declared} (payload starts at byte offset {header_size})"
        )

    def _iterate() -> Iterator[LayerFeatureSample]:
        with open(path, "rb") as stream:
            stream.seek(header_size)
            for n in range(sample_count):
                record = stream.read(record_size)
                if len(record) != record_size:
                    raise CorruptionError(
                        f"{path}: short read in record {n} at byte offset "
                        f"{header_size + n * record_size}"
                    )
                label, task_id = struct.unpack("<II", record[:8])
                offset = 8
                layers = []
                for d in manifest.layer_dims:
                    nbytes = d * np_dtype.itemsize
                    layers.append(
                        np.frombuffer(record, dtype=np_dtype, count=d, offset=offset).astype(
                            np.float64
                        )
                    )
                    offset += nbytes
                yield LayerFeatureSample(tuple(layers), label=label, task_id=task_id)

    return manifest, _iterate()


def inspect_file(path) -> dict:
    """Header plus first-record diagnostics, for the ``inspect`` subcommand."""
    with open(path, "rb") as fh:
        sample_count, dims, class_count, tag, np_dtype = _read_header(fh, path)
        info = {
            "path": str(path),
            "version": FORMAT_VERSION,
            "num_layers": len(dims),
            "layer_dims": list(dims),
            "sample_count": sample_count,
            "num_classes": class_count,
            "dtype": "float32" if tag == 0 else "float64",
            "header_bytes": _header_size(len(dims)),
            "record_bytes": _record_size(tuple(dims), np_dtype),
        }
        if sample_count > 0:
            record = fh.read(info["record_bytes"])
            if len(record) == info["record_bytes"]:
                label, task_id = struct.unpack("<II", record[:8])
                values = np.frombuffer(record, dtype=np_dtype, offset=8)
                info["first_record"] = {
                    "label": label,
                    "task_id": task_id,
                    "l2_norm": float(np.linalg.norm(values.astype(np.float64))),
                }
            else:
                info["first_record"] = "truncated"
    return info


TRAIN_FILE = "train.layf"
TEST_FILE = "test.layf"


def write_task_stream(stream: TaskStream, out_dir, dtype: str = "float32") -> tuple[str, str]:
    """Write a task stream as a train/test file pair inside ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    train_path = os.path.join(out_dir, TRAIN_FILE)
    test_path = os.path.join(out_dir, TEST_FILE)
    manifest = stream.manifest
    test_manifest = StreamManifest(
        num_layers=manifest.num_layers,
        layer_dims=manifest.layer_dims,
        num_classes=manifest.num_classes,
        task_sizes=tuple(len(t) for t in stream.test_tasks),
        task_label_spaces=manifest.task_label_spaces,
        source=manifest.source,
    )
    write_stream((s for task in stream.train_tasks for s in task), manifest, train_path, dtype)
    write_stream((s for task in stream.test_tasks for s in task), test_manifest, test_path, dtype)
    return train_path, test_path


def _group_by_task(samples: Iterable[LayerFeatureSample], num_tasks: int):
    tasks: list[list[LayerFeatureSample]] = [[] for _ in range(num_tasks)]
    for s in samples:
        if s.task_id >= num_tasks:
            raise ContractError(f"sample tagged task {s.task_id}, stream declares {num_tasks}")
        tasks[s.task_id].append(s)
    return tuple(tuple(t) for t in tasks)


def load_task_stream(path) -> TaskStream:
    """Load a train/test stream pair written by write_task_stream.

    ``path`` may be the directory holding train.layf/test.layf or the
    train file itself (the test file is then its sibling).
    """
    path = str(path)
    if os.path.isdir(path):
        train_path = os.path.join(path, TRAIN_FILE)
        test_path = os.path.join(path, TEST_FILE)
    elif os.path.basename(path) == TRAIN_FILE:
        train_path = path
        test_path = os.path.join(os.path.dirname(path), TEST_FILE)
    else:
        raise ValueError(
            f"{path}: expected a stream directory or a path ending in {TRAIN_FILE}"
        )
    train_manifest, train_iter = read_stream(train_path)
    test_manifest, test_iter = read_stream(test_path)
    same = (
        train_manifest.layer_dims == test_manifest.layer_dims
        and train_manifest.num_classes == test_manifest.num_classes
        and train_manifest.num_tasks == test_manifest.num_tasks
        and train_manifest.task_label_spaces == test_manifest.task_label_spaces
    )
    if not same:
        raise FormatError(f"{train_path} and {test_path} disagree on stream structure")
    stream = TaskStream(
        manifest=train_manifest,
        train_tasks=_group_by_task(train_iter, train_manifest.num_tasks),
        test_tasks=_group_by_task(test_iter, test_manifest.num_tasks),
    )
    stream.validate()
    return stream


# ---------------------------------------------------------------------------
# Checkpoints

_KIND_ACCUMULATOR = 0
_KIND_CLASSIFIER = 1
_METHOD_TAGS = {FACTORIZED_SOLVE: 0, PSEUDO_INVERSE: 1}
_METHOD_NAMES = {v: k for k, v in _METHOD_TAGS.items()}


def _write_checkpoint(path, kind: int, fixed: bytes, payload: bytes) -> None:
    checksum = fnv1a64(payload)
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<IIQ", FORMAT_VERSION, kind, checksum))
        fh.write(fixed)
        fh.write(payload)


def _read_checkpoint(path) -> tuple[int, bytes]:
    with open(path, "rb") as fh:
        head = fh.read(20)
        if len(head) < 20:
            raise CorruptionError(f"{path}: file shorter than the checkpoint header")
        if head[:4] != CHECKPOINT_MAGIC:
            raise FormatError(f"{path}: bad magic {head[:4]!r}, expected {CHECKPOINT_MAGIC!r}")
        version, kind, checksum = struct.unpack("<IIQ", head[4:20])
        if version > FORMAT_VERSION:
            raise UnsupportedVersionError(
                f"{path}: version {version} is newer than {FORMAT_VERSION}"
            )
        rest = fh.read()
    return kind, checksum, rest


def save_accumulator(acc: StatAccumulator, path) -> None:
    fixed = struct.pack("<III", acc.dim, acc.num_classes, acc.k)
    payload = (
        acc.class_counts.astype("<i8").tobytes()
        + acc.gram.astype("<f8").tobytes()
        + acc.proto_sums.astype("<f8").tobytes()
    )
    _write_checkpoint(path, _KIND_ACCUMULATOR, fixed, payload)


def save_classifier(clf: RidgeClassifier, path) -> None:
    num_classes = clf.weights.shape[0]
    fixed = struct.pack(
        "<IIId", clf.dim, num_classes, _METHOD_TAGS[clf.solve_method], clf.lam
    )
    payload = clf.weights.astype("<f8").tobytes()
    _write_checkpoint(path, _KIND_CLASSIFIER, fixed, payload)


def load_checkpoint(path, expect_dim: int | None = None, expect_classes: int | None = None):
    """Restore an accumulator or classifier snapshot.

    Optional ``expect_dim``/``expect_classes`` assert the snapshot's
    shape against the caller's current configuration.
    """
    kind, checksum, rest = _read_checkpoint(path)
    if kind == _KIND_ACCUMULATOR:
        fixed_size = 12
        if len(rest) < fixed_size:
            raise CorruptionError(f"{path}: truncated accumulator header")
        dim, num_classes, k = struct.unpack("<III", rest[:fixed_size])
        payload = rest[fixed_size:]
        expected = 8 * num_classes + 8 * dim * dim + 8 * num_classes * dim
        if len(payload) != expected:
            raise CorruptionError(
                f"{path}: accumulator payload is {len(payload)} bytes, expected {expected}"
            )
        if fnv1a64(payload) != checksum:
            raise CorruptionError(f"{path}: checkpoint payload checksum mismatch")
        _check_shape(path, dim, num_classes, expect_dim, expect_classes)
        acc = StatAccumulator(dim, num_classes, k)
        offset = 8 * num_classes
        acc.class_counts = np.frombuffer(payload, dtype="<i8", count=num_classes).copy()
        acc.gram = (
            np.frombuffer(payload, dtype="<f8", count=dim * dim, offset=offset)
            .reshape(dim, dim)
            .copy()
        )
        offset += 8 * dim * dim
        acc.proto_sums = (
            np.frombuffer(payload, dtype="<f8", count=num_classes * dim, offset=offset)
            .reshape(num_classes, dim)
            .copy()
        )
        return acc
    if kind == _KIND_CLASSIFIER:
        fixed_size = 20
        if len(rest) < fixed_size:
            raise CorruptionError(f"{path}: truncated classifier header")
        dim, num_classes, method_tag, lam = struct.unpack("<IIId", rest[:fixed_size])
        if method_tag not in _METHOD_NAMES:
            raise FormatError(f"{path}: unknown solve-method tag {method_tag}")
        payload = rest[fixed_size:]
        expected = 8 * num_classes * dim
        if len(payload) != expected:
            raise CorruptionError(
                f"{path}: classifier payload is {len(payload)} bytes, expected {expected}"
            )
        if fnv1a64(payload) != checksum:
            raise CorruptionError(f"{path}: checkpoint payload checksum mismatch")
        _check_shape(path, dim, num_classes, expect_dim, expect_classes)
        weights = (
            np.frombuffer(payload, dtype="<f8", count=num_classes * dim)
            .reshape(num_classes, dim)
            .copy()
        )
        return RidgeClassifier(
            weights=weights, lam=lam, dim=dim, solve_method=_METHOD_NAMES[method_tag]
        )
    raise FormatError(f"{path}: unknown checkpoint kind {kind}")


def _check_shape(path, dim, num_classes, expect_dim, expect_classes):
    if expect_dim is not None and dim != expect_dim:
        raise ContractError(
            f"{path}: checkpoint has dim {dim}, current configuration expects {expect_dim}"
        )
    if expect_classes is not None and num_classes != expect_classes:
        raise ContractError(
            f"{path}: checkpoint has {num_classes} classes, current configuration "
            f"expects {expect_classes}"
        )
