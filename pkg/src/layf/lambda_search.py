"""Per-task ridge-parameter selection on a stratified holdout.

For each task the training data is split 80:20 stratified by label, the
first part is folded into the accumulator, every candidate lambda is
scored by held-out accuracy against all classes, and the holdout is then
folded in as well, so the accumulator ends up identical to plain
whole-task streaming no matter which candidate won.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .accumulator import StatAccumulator
from .core import LayerFeatureSample, concat_features
from .errors import ConfigError, ContractError
from .solver import fit_ridge

DEFAULT_CANDIDATES = (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)


@dataclass(frozen=True)
class LambdaSearchConfig:
    candidates: tuple[float, ...] = DEFAULT_CANDIDATES
    split_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "candidates", tuple(float(c) for c in self.candidates))
        if not self.candidates:
            raise ConfigError("candidate list must be non-empty")
        if any(c < 0 for c in self.candidates):
            raise ConfigError(f"candidates must be >= 0, got {self.candidates}")
        if not 0.0 < self.split_fraction < 1.0:
            raise ConfigError(
                f"split_fraction must be strictly between 0 and 1, got {self.split_fraction}"
            )


@dataclass(frozen=True)
class LambdaSearchResult:
    best_lambda: float
    accumulator: StatAccumulator
    # one (lambda, holdout accuracy) pair per candidate, in candidate order
    candidate_accuracies: tuple[tuple[float, float], ...]


def stratified_split(
    task_samples: Sequence[LayerFeatureSample], fraction: float, seed: int
) -> tuple[list[LayerFeatureSample], list[LayerFeatureSample]]:
    """Split a task per class: ceil(fraction*n) to fit, the rest to holdout.

    The per-class membership is shuffled by a generator seeded with
    ``seed``; both returned parts preserve the original stream order.
    A class with a single sample contributes it to the fit part only.
    """
    if not task_samples:
        raise ContractError("cannot split an empty task")
    rng = np.random.default_rng(seed % (2**64))
    by_label: dict[int, list[int]] = {}
    for i, s in enumerate(task_samples):
        by_label.setdefault(s.label, []).append(i)
    fit_idx: list[int] = []
    holdout_idx: list[int] = []
    for label in sorted(by_label):
        idx = np.array(by_label[label])
        idx = idx[rng.permutation(idx.size)]
        n_fit = math.ceil(fraction * idx.size)
        fit_idx.extend(idx[:n_fit].tolist())
        holdout_idx.extend(idx[n_fit:].tolist())
    fit_idx.sort()
    holdout_idx.sort()
    return [task_samples[i] for i in fit_idx], [task_samples[i] for i in holdout_idx]


def optimize_lambda(
    acc: StatAccumulator,
    task_samples: Sequence[LayerFeatureSample],
    cfg: LambdaSearchConfig,
    k: int,
) -> LambdaSearchResult:
    """Accumulate one task while selecting the best-performing lambda.

    ``acc`` is updated in place (it may already hold statistics from
    earlier tasks) and is returned fully updated with the whole task;
    the winning candidate has no influence on the final statistics.
    Holdout accuracy is per-sample and scored against all classes. Ties
    break toward the smaller lambda. With an empty holdout (every class
    a singleton) all candidates score 0.0 and the smallest wins.
    """
    fit_part, holdout_part = stratified_split(task_samples, cfg.split_fraction, cfg.seed)
    for s in fit_part:
        acc.update(concat_features(s, k), s.label)

    if holdout_part:
        holdout_feats = np.stack([concat_features(s, k).values for s in holdout_part])
        holdout_labels = np.array([s.label for s in holdout_part])
    else:
        holdout_feats = holdout_labels = None

    table: list[tuple[float, float]] = []
    best_lambda = None
    best_accuracy = -1.0
    for lam in cfg.candidates:
        if holdout_feats is None:
            accuracy = 0.0
        else:
            clf = fit_ridge(acc, lam)
            accuracy = float(np.mean(clf.predict_batch(holdout_feats) == holdout_labels))
        table.append((lam, accuracy))
        if accuracy > best_accuracy or (accuracy == best_accuracy and lam < best_lambda):
            best_lambda = lam
            best_accuracy = accuracy

    for s in holdout_part:
        acc.update(concat_features(s, k), s.label)
    return LambdaSearchResult(
        best_lambda=best_lambda, accumulator=acc, candidate_accuracies=tuple(table)
    )
