"""Shared data model: per-layer feature samples, stream manifests, task streams.

Everything here is immutable after construction and safe to share across
threads. All feature arithmetic is done in float64 regardless of the
precision features were stored with on disk.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ContractError


def _frozen_vector(values) -> np.ndarray:
    """Copy ``values`` into a read-only 1-D float64 array."""
    arr = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LayerFeatureSample:
    """One labeled sample: feature vectors for layers 1..L, label, task index."""

    layer_features: tuple[np.ndarray, ...]
    label: int
    task_id: int

    def __post_init__(self):
        object.__setattr__(
            self, "layer_features",
            tuple(_frozen_vector(v) for v in self.layer_features),
        )
        if self.label < 0:
            raise ContractError(f"label must be non-negative, got {self.label}")
        if self.task_id < 0:
            raise ContractError(f"task_id must be non-negative, got {self.task_id}")

    @property
    def num_layers(self) -> int:
        return len(self.layer_features)


@dataclass(frozen=True)
class StreamManifest:
    """Declared shape of a stream: layer dims, class count, task structure."""

    num_layers: int
    layer_dims: tuple[int, ...]
    num_classes: int
    task_sizes: tuple[int, ...]
    task_label_spaces: tuple[frozenset[int], ...]
    source: str = ""

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        object.__setattr__(self, "task_sizes", tuple(int(n) for n in self.task_sizes))
        object.__setattr__(
            self, "task_label_spaces",
            tuple(frozenset(int(y) for y in ys) for ys in self.task_label_spaces),
        )
        if self.num_layers < 1:
            raise ConfigError(f"num_layers must be >= 1, got {self.num_layers}")
        if len(self.layer_dims) != self.num_layers:
            raise ConfigError(
                f"layer_dims has {len(self.layer_dims)} entries, expected {self.num_layers}"
            )
        if any(d < 1 for d in self.layer_dims):
            raise ConfigError(f"all layer dims must be >= 1, got {self.layer_dims}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if len(self.task_sizes) < 1 or len(self.task_label_spaces) < 1:
            raise ConfigError("a manifest must declare at least one task")
        if len(self.task_sizes) != len(self.task_label_spaces):
            raise ConfigError("task_sizes and task_label_spaces disagree on task count")
        union = frozenset().union(*self.task_label_spaces)
        if len(union) != self.num_classes:
            raise ConfigError(
                f"task label spaces cover {len(union)} classes, manifest declares {self.num_classes}"
            )
        if union and (min(union) < 0 or max(union) >= self.num_classes):
            raise ConfigError(
                f"labels must be dense in [0, {self.num_classes}), got range "
                f"[{min(union)}, {max(union)}]"
            )

    @property
    def num_tasks(self) -> int:
        return len(self.task_sizes)

    def concat_dim(self, k: int) -> int:
        """Dimension of the last-k-layer concatenation."""
        if not 1 <= k <= self.num_layers:
            raise ValueError(f"k={k} out of range for L={self.num_layers} layers")
        return int(sum(self.layer_dims[self.num_layers - k:]))


@dataclass(frozen=True)
class ConcatFeature:
    """Concatenation of a sample's last k layer vectors, in layer order."""

    values: np.ndarray
    k: int

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen_vector(self.values))
        if self.k < 1:
            raise ValueError(f"k must be >= 1, got {self.k}")

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


def concat_features(sample: LayerFeatureSample, k: int) -> ConcatFeature:
    """Join the last ``k`` layer vectors of ``sample`` in layer order.

    Layer L-k+1 comes first and layer L last, so for k=1 the result is
    exactly the final layer's vector.
    """
    num_layers = sample.num_layers
    if not 1 <= k <= num_layers:
        raise ValueError(f"k={k} out of range for a sample with L={num_layers} layers")
    return ConcatFeature(np.concatenate(sample.layer_features[num_layers - k:]), k)


def validate_sample(sample: LayerFeatureSample, manifest: StreamManifest) -> str | None:
    """Check ``sample`` against ``manifest``; return the first violation or None.

    Violations are returned as human-readable strings (layer numbers are
    1-based) rather than raised, so callers can collect reports.
    """
    if sample.num_layers != manifest.num_layers:
        return (
            f"sample has {sample.num_layers} layers, manifest declares "
            f"{manifest.num_layers}"
        )
    for l, (vec, want) in enumerate(zip(sample.layer_features, manifest.layer_dims), start=1):
        if vec.shape[0] != want:
            return f"layer {l} has dimension {vec.shape[0]}, manifest declares {want}"
        finite = np.isfinite(vec)
        if not finite.all():
            idx = int(np.argmin(finite))
            return f"layer {l} entry {idx} is not finite ({vec[idx]!r})"
    if sample.label >= manifest.num_classes:
        return f"label {sample.label} out of range for {manifest.num_classes} classes"
    return None


@dataclass(frozen=True)
class TaskStream:
    """An ordered sequence of tasks with train and test splits."""

    manifest: StreamManifest
    train_tasks: tuple[tuple[LayerFeatureSample, ...], ...]
    test_tasks: tuple[tuple[LayerFeatureSample, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "train_tasks", tuple(tuple(t) for t in self.train_tasks))
        object.__setattr__(self, "test_tasks", tuple(tuple(t) for t in self.test_tasks))

    @property
    def num_tasks(self) -> int:
        return len(self.train_tasks)

    def validate(self) -> None:
        """Raise ContractError on any stream/manifest inconsistency."""
        m = self.manifest
        if len(self.train_tasks) != m.num_tasks or len(self.test_tasks) != m.num_tasks:
            raise ContractError(
                f"stream has {len(self.train_tasks)} train / {len(self.test_tasks)} test "
                f"tasks, manifest declares {m.num_tasks}"
            )
        for t, (task, size) in enumerate(zip(self.train_tasks, m.task_sizes)):
            if len(task) != size:
                raise ContractError(
                    f"train task {t} has {len(task)} samples, manifest declares {size}"
                )
        for split_name, tasks in (("train", self.train_tasks), ("test", self.test_tasks)):
            for t, task in enumerate(tasks):
                space = m.task_label_spaces[t]
                for s in task:
                    report = validate_sample(s, m)
                    if report is not None:
                        raise ContractError(f"{split_name} task {t}: {report}")
                    if s.task_id != t:
                        raise ContractError(
                            f"{split_name} task {t} contains a sample tagged task {s.task_id}"
                        )
                    if s.label not in space:
                        raise ContractError(
                            f"{split_name} task {t}: label {s.label} outside the task's label space"
                        )
