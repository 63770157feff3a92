"""Streaming first- and second-order feature statistics.

A StatAccumulator holds the running Gram matrix of concatenated features
together with per-class prototype sums and counts, updated one sample at
a time. It is the entire learned state of the engine: classifiers are
derived from it in closed form and never look at raw samples again.
"""

from __future__ import annotations

import numpy as np

from .core import ConcatFeature
from .errors import ContractError, UnseenClassError


def _as_vector(feat) -> np.ndarray:
    if isinstance(feat, ConcatFeature):
        return feat.values
    return np.asarray(feat, dtype=np.float64).reshape(-1)


class StatAccumulator:
    """Gram matrix plus per-class prototype sums over a feature stream.

    The Gram update writes the full rank-1 outer product, so ``gram`` is
    exactly symmetric at all times, and positive semidefinite up to
    rounding. Single-writer: concurrent updates to one instance are not
    supported; shard the stream and ``merge`` instead.
    """

    def __init__(self, dim: int, num_classes: int, k: int = 1):
        if dim < 1:
            raise ValueError(f"dim must be >= 1, got {dim}")
        if num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {num_classes}")
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.dim = int(dim)
        self.num_classes = int(num_classes)
        self.k = int(k)
        self.gram = np.zeros((dim, dim), dtype=np.float64)
        self.proto_sums = np.zeros((num_classes, dim), dtype=np.float64)
        self.class_counts = np.zeros(num_classes, dtype=np.int64)

    @property
    def samples_seen(self) -> int:
        return int(self.class_counts.sum())

    def update(self, feat, label: int) -> None:
        """Add one sample: gram += v v^T, proto_sums[label] += v."""
        v = _as_vector(feat)
        if v.shape[0] != self.dim:
            raise ContractError(
                f"feature has dimension {v.shape[0]}, accumulator expects {self.dim}"
            )
        if not 0 <= label < self.num_classes:
            raise ContractError(
                f"label {label} out of range for {self.num_classes} classes"
            )
        self.gram += np.outer(v, v)
        self.proto_sums[label] += v
        self.class_counts[label] += 1

    def mean_prototype(self, label: int) -> np.ndarray:
        """Average feature vector of the given class."""
        if not 0 <= label < self.num_classes:
            raise ContractError(
                f"label {label} out of range for {self.num_classes} classes"
            )
        n = self.class_counts[label]
        if n == 0:
            raise UnseenClassError(f"class {label} has no samples")
        return self.proto_sums[label] / float(n)

    def copy(self) -> "StatAccumulator":
        out = StatAccumulator(self.dim, self.num_classes, self.k)
        out.gram = self.gram.copy()
        out.proto_sums = self.proto_sums.copy()
        out.class_counts = self.class_counts.copy()
        return out


def merge(a: StatAccumulator, b: StatAccumulator) -> StatAccumulator:
    """Combine two independently accumulated shards by componentwise sum."""
    if (a.dim, a.num_classes, a.k) != (b.dim, b.num_classes, b.k):
        raise ContractError(
            f"cannot merge accumulators with shapes (dim={a.dim}, C={a.num_classes}, "
            f"k={a.k}) and (dim={b.dim}, C={b.num_classes}, k={b.k})"
        )
    out = StatAccumulator(a.dim, a.num_classes, a.k)
    out.gram = a.gram + b.gram
    out.proto_sums = a.proto_sums + b.proto_sums
    out.class_counts = a.class_counts + b.class_counts
    return out
