"""Protocol runner, metrics, diagnostics, and result artifacts.

Runs the class-incremental (per-task lambda search) and online (fixed
lambda, strict single pass) protocols over a task stream, fills the
lower-triangular accuracy matrix, and derives average accuracy and
average forgetting per task. Also home to the offline diagnostics:
per-layer best-class counts, the k-vs-1 universality fraction, and the
memory/runtime accounting report.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .accumulator import StatAccumulator
from .core import StreamManifest, TaskStream, concat_features
from .errors import ConfigError, ContractError, StateError, UndefinedMetricError
from .lambda_search import LambdaSearchConfig, optimize_lambda
from .solver import cosine_scores, fit_ridge, fit_separate_ensemble

log = logging.getLogger("layf.harness")

PROTOCOLS = ("cil", "ocl")
CLASSIFIERS = ("layup", "nmc", "laynmc", "ensemble-separate")

# Documented accounting baselines: RanPAC projects into 10^4 dimensions
# (10^8 Gram entries) and carries ~11M extra parameters; SLCA stores one
# d_L x d_L covariance per class; ADAM keeps a second 84M-parameter
# feature extractor.
RANPAC_PROJECTION_DIM = 10_000
RANPAC_EXTRA_PARAMS = 11_000_000
ADAM_EXTRA_PARAMS = 84_000_000


class ResultMatrix:
    """Lower-triangular accuracy matrix: entry (t, i) is the accuracy on
    task i's test split after training task t (0-indexed internally,
    1-indexed in reports)."""

    def __init__(self, num_tasks: int):
        if num_tasks < 1:
            raise ValueError(f"num_tasks must be >= 1, got {num_tasks}")
        self._r = np.full((num_tasks, num_tasks), np.nan)

    @property
    def num_tasks(self) -> int:
        return self._r.shape[0]

    def set(self, t_idx: int, i_idx: int, value: float) -> None:
        if not 0 <= i_idx <= t_idx < self.num_tasks:
            raise ContractError(f"entry ({t_idx}, {i_idx}) is outside the lower triangle")
        if not 0.0 <= value <= 1.0:
            raise ContractError(f"accuracy {value} outside [0, 1]")
        self._r[t_idx, i_idx] = value

    def get(self, t_idx: int, i_idx: int) -> float:
        if not 0 <= i_idx <= t_idx < self.num_tasks:
            raise ContractError(f"entry ({t_idx}, {i_idx}) is outside the lower triangle")
        return float(self._r[t_idx, i_idx])

    def row_complete(self, t_idx: int) -> bool:
        return bool(np.all(np.isfinite(self._r[t_idx, : t_idx + 1])))

    def to_triangle(self) -> list[list[float]]:
        """Row-major lower-triangular representation for serialization."""
        return [[float(v) for v in self._r[t, : t + 1]] for t in range(self.num_tasks)]

    @classmethod
    def from_triangle(cls, rows: Sequence[Sequence[float]]) -> "ResultMatrix":
        out = cls(len(rows))
        for t, row in enumerate(rows):
            if len(row) != t + 1:
                raise ContractError(f"row {t} has {len(row)} entries, expected {t + 1}")
            for i, v in enumerate(row):
                out.set(t, i, float(v))
        return out


def average_accuracy(r: ResultMatrix, t: int) -> float:
    """Mean accuracy over tasks 1..t after training task t (t is 1-based)."""
    if not 1 <= t <= r.num_tasks:
        raise ContractError(f"task index {t} out of range for {r.num_tasks} tasks")
    if not r.row_complete(t - 1):
        raise StateError(f"row {t} of the result matrix is incomplete")
    return float(np.mean(r._r[t - 1, :t]))


def average_forgetting(r: ResultMatrix, t: int) -> float:
    """Mean drop from each prior task's best accuracy to its row-t accuracy.

    Undefined for t=1; the maximum is taken over the rows where the
    entry exists (training steps i..t-1 for column i).
    """
    if t < 2:
        raise UndefinedMetricError("average forgetting is undefined for t < 2")
    if not 2 <= t <= r.num_tasks:
        raise ContractError(f"task index {t} out of range for {r.num_tasks} tasks")
    t_idx = t - 1
    for row in range(t_idx + 1):
        if not r.row_complete(row):
            raise StateError(f"row {row + 1} of the result matrix is incomplete")
    drops = [
        float(np.max(r._r[i_idx:t_idx, i_idx])) - float(r._r[t_idx, i_idx])
        for i_idx in range(t_idx)
    ]
    return float(np.mean(drops))


@dataclass(frozen=True)
class RunConfig:
    """Everything that determines one protocol run."""

    protocol: str  # "cil" | "ocl"
    k: int
    classifier: str = "layup"
    lambda_mode: str = "search"  # "search" | "fixed"
    lambda_value: float | None = None
    lambda_search: LambdaSearchConfig | None = None
    seed: int = 0
    stream_path: str | None = None
    output_dir: str | None = None

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}, expected one of {PROTOCOLS}")
        if self.classifier not in CLASSIFIERS:
            raise ConfigError(
                f"unknown classifier {self.classifier!r}, expected one of {CLASSIFIERS}"
            )
        if self.k < 1:
            raise ConfigError(f"k must be >= 1, got {self.k}")
        if self.lambda_mode not in ("search", "fixed"):
            raise ConfigError(f"unknown lambda_mode {self.lambda_mode!r}")
        if self.protocol == "ocl" and self.lambda_mode == "search":
            raise ConfigError("the online protocol forbids lambda search (single pass)")
        if self.classifier == "ensemble-separate" and self.lambda_mode == "search":
            raise ConfigError("lambda search is only supported for the layup classifier")
        if self.lambda_mode == "fixed" and self.classifier in ("layup", "ensemble-separate"):
            if self.lambda_value is None:
                raise ConfigError("fixed lambda_mode requires lambda_value")
            if self.lambda_value < 0:
                raise ConfigError(f"lambda_value must be >= 0, got {self.lambda_value}")
        if (
            self.classifier == "layup"
            and self.lambda_mode == "search"
            and self.lambda_search is None
        ):
            object.__setattr__(self, "lambda_search", LambdaSearchConfig(seed=self.seed))

    def to_dict(self) -> dict:
        d = {
            "protocol": self.protocol,
            "k": self.k,
            "classifier": self.classifier,
            "lambda_mode": self.lambda_mode,
            "lambda_value": self.lambda_value,
            "seed": self.seed,
            "stream_path": self.stream_path,
        }
        if self.lambda_search is not None:
            d["lambda_search"] = {
                "candidates": list(self.lambda_search.candidates),
                "split_fraction": self.lambda_search.split_fraction,
                "seed": self.lambda_search.seed,
            }
        else:
            d["lambda_search"] = None
        return d


@dataclass(frozen=True)
class PerTaskRecord:
    task: int  # 1-based
    lambda_used: float | None
    a_t: float
    f_t: float | None
    # (lambda, holdout accuracy) pairs when lambda search ran, else None
    candidates: tuple[tuple[float, float], ...] | None = None


@dataclass(frozen=True)
class RunResult:
    config: RunConfig
    matrix: ResultMatrix
    per_task: tuple[PerTaskRecord, ...]
    # per-class accuracy over the union of test splits after the final
    # task; NaN for classes without test samples
    final_per_class_accuracy: np.ndarray

    @property
    def final_average_accuracy(self) -> float:
        return self.per_task[-1].a_t

    def to_json_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_task": [
                {
                    "task": rec.task,
                    "lambda": rec.lambda_used,
                    "A_t": rec.a_t,
                    "F_t": rec.f_t,
                    "candidates": [list(c) for c in rec.candidates]
                    if rec.candidates is not None
                    else None,
                }
                for rec in self.per_task
            ],
            "R": self.matrix.to_triangle(),
            "final_per_class_accuracy": [
                None if not np.isfinite(v) else float(v)
                for v in self.final_per_class_accuracy
            ],
        }


def _check_k(manifest: StreamManifest, k: int) -> None:
    if not 1 <= k <= manifest.num_layers:
        raise ConfigError(f"k={k} out of range for a stream with L={manifest.num_layers} layers")


def _cosine_masked_labels(acc: StatAccumulator, feats: np.ndarray) -> np.ndarray:
    """Cosine argmax restricted to classes seen so far (zero-count classes
    have no prototype direction and are never predicted)."""
    seen = np.flatnonzero(acc.class_counts > 0)
    means = acc.proto_sums[seen] / acc.class_counts[seen, None].astype(np.float64)
    scores = cosine_scores(means, feats)
    return seen[np.argmax(scores, axis=1)]


def _run(stream: TaskStream, cfg: RunConfig) -> RunResult:
    stream.validate()
    manifest = stream.manifest
    num_layers, num_classes = manifest.num_layers, manifest.num_classes
    num_tasks = stream.num_tasks
    kind = cfg.classifier
    k_eff = 1 if kind == "nmc" else cfg.k
    _check_k(manifest, k_eff)
    layer_lo = num_layers - k_eff

    for i, task in enumerate(stream.test_tasks):
        if not task:
            raise ContractError(f"test split of task {i} is empty; accuracy undefined")

    test_labels = [np.array([s.label for s in task]) for task in stream.test_tasks]
    if kind == "ensemble-separate":
        per_layer_accs = [
            StatAccumulator(manifest.layer_dims[l], num_classes, 1)
            for l in range(layer_lo, num_layers)
        ]
        test_layer_feats = [
            [np.stack([s.layer_features[l] for s in task]) for l in range(layer_lo, num_layers)]
            for task in stream.test_tasks
        ]
    else:
        acc = StatAccumulator(manifest.concat_dim(k_eff), num_classes, k_eff)
        test_feats = [
            np.stack([concat_features(s, k_eff).values for s in task])
            for task in stream.test_tasks
        ]

    matrix = ResultMatrix(num_tasks)
    records: list[PerTaskRecord] = []
    class_correct = np.zeros(num_classes)
    class_total = np.zeros(num_classes)

    for t in range(num_tasks):
        task = stream.train_tasks[t]
        lam_used: float | None = None
        candidates = None

        if kind == "layup" and cfg.lambda_mode == "search":
            # per-task split seed derives from the search seed and the task index
            search_cfg = dataclasses.replace(
                cfg.lambda_search, seed=cfg.lambda_search.seed + t
            )
            result = optimize_lambda(acc, task, search_cfg, k_eff)
            lam_used = result.best_lambda
            candidates = result.candidate_accuracies
            for lam, holdout_acc in candidates:
                log.info(
                    "task=%d lambda=%g holdout_accuracy=%.6f", t + 1, lam, holdout_acc
                )
        else:
            for s in task:
                if kind == "ensemble-separate":
                    for j, l in enumerate(range(layer_lo, num_layers)):
                        per_layer_accs[j].update(s.layer_features[l], s.label)
                else:
                    acc.update(concat_features(s, k_eff), s.label)
            if kind in ("layup", "ensemble-separate"):
                lam_used = cfg.lambda_value

        if kind == "layup":
            clf = fit_ridge(acc, lam_used)
            predict = clf.predict_batch
        elif kind == "ensemble-separate":
            clfs = fit_separate_ensemble(per_layer_accs, lam_used)

            def predict(feats_list, _clfs=clfs):
                scores = np.mean(
                    [c.score_batch(f) for c, f in zip(_clfs, feats_list)], axis=0
                )
                return np.argmax(scores, axis=1)

        else:  # nmc / laynmc

            def predict(feats):
                return _cosine_masked_labels(acc, feats)

        is_final = t == num_tasks - 1
        for i in range(t + 1):
            inputs = test_layer_feats[i] if kind == "ensemble-separate" else test_feats[i]
            predicted = predict(inputs)
            truth = test_labels[i]
            matrix.set(t, i, float(np.mean(predicted == truth)))
            if is_final:
                np.add.at(class_total, truth, 1.0)
                np.add.at(class_correct, truth[predicted == truth], 1.0)

        a_t = average_accuracy(matrix, t + 1)
        f_t = average_forgetting(matrix, t + 1) if t >= 1 else None
        records.append(
            PerTaskRecord(
                task=t + 1, lambda_used=lam_used, a_t=a_t, f_t=f_t, candidates=candidates
            )
        )

    with np.errstate(invalid="ignore"):
        per_class = np.where(class_total > 0, class_correct / class_total, np.nan)
    return RunResult(
        config=cfg,
        matrix=matrix,
        per_task=tuple(records),
        final_per_class_accuracy=per_class,
    )


def run_cil(stream: TaskStream, cfg: RunConfig) -> RunResult:
    """Class-incremental protocol: per-task lambda search when configured."""
    if cfg.protocol != "cil":
        raise ConfigError(f"run_cil requires protocol 'cil', got {cfg.protocol!r}")
    return _run(stream, cfg)


def run_ocl(stream: TaskStream, cfg: RunConfig) -> RunResult:
    """Online protocol: one pass, every sample enters the statistics once,
    no split and no candidate sweep."""
    if cfg.protocol != "ocl":
        raise ConfigError(f"run_ocl requires protocol 'ocl', got {cfg.protocol!r}")
    return _run(stream, cfg)


def per_layer_best_counts(stream: TaskStream, lam: float) -> np.ndarray:
    """Count, per layer, the classes that layer classifies best.

    Builds one single-layer regularized classifier per layer over the
    whole training stream (offline diagnostic), measures per-class test
    accuracy per layer, and assigns each class to its best layer. A tie
    is assigned to the deepest tied layer, so the counts always
    partition the class set.
    """
    stream.validate()
    manifest = stream.manifest
    num_layers, num_classes = manifest.num_layers, manifest.num_classes

    accs = [StatAccumulator(d, num_classes, 1) for d in manifest.layer_dims]
    for task in stream.train_tasks:
        for s in task:
            for l in range(num_layers):
                accs[l].update(s.layer_features[l], s.label)

    test_samples = [s for task in stream.test_tasks for s in task]
    if not test_samples:
        raise ContractError("stream has no test samples; per-layer accuracy undefined")
    truth = np.array([s.label for s in test_samples])
    totals = np.bincount(truth, minlength=num_classes).astype(np.float64)

    per_layer_class_acc = np.zeros((num_layers, num_classes))
    for l in range(num_layers):
        feats = np.stack([s.layer_features[l] for s in test_samples])
        predicted = fit_ridge(accs[l], lam).predict_batch(feats)
        correct = np.bincount(truth[predicted == truth], minlength=num_classes)
        with np.errstate(invalid="ignore"):
            per_layer_class_acc[l] = np.where(totals > 0, correct / totals, 0.0)

    counts = np.zeros(num_layers, dtype=np.int64)
    for c in range(num_classes):
        best_layer, best_acc = 0, -1.0
        for l in range(num_layers):
            if per_layer_class_acc[l, c] >= best_acc:  # ties go to the deepest layer
                best_layer, best_acc = l, per_layer_class_acc[l, c]
        counts[best_layer] += 1
    return counts


def universality_fraction(stream: TaskStream, k_big: int, cfg: RunConfig) -> float:
    """Fraction of classes classified at least as well with k=k_big as with k=1.

    Runs the configured protocol twice (classifier forced to layup),
    compares final per-class accuracies. Classes without test samples
    count as ties.
    """
    if k_big < 1:
        raise ValueError(f"k_big must be >= 1, got {k_big}")
    base = dataclasses.replace(cfg, classifier="layup", k=k_big)
    big = _run(stream, base)
    if k_big == 1:
        small = big  # self-comparison
    else:
        small = _run(stream, dataclasses.replace(base, k=1))
    a_big = big.final_per_class_accuracy
    a_one = small.final_per_class_accuracy
    tie = ~(np.isfinite(a_big) & np.isfinite(a_one))
    wins = np.where(tie, True, a_big >= a_one)
    return float(np.mean(wins))


@dataclass(frozen=True)
class MemoryReport:
    """Accounting record for engine state size and solve cost."""

    k: int
    num_classes: int
    concat_dim: int
    gram_entries: int
    prototype_entries: int
    solve_ops: int
    ranpac_memory: int
    ranpac_solve_ops: int
    slca_memory: int
    slca_solve_ops: int
    adam_memory: int
    memory_reduction_vs_ranpac: float
    memory_reduction_vs_slca: float
    memory_reduction_vs_adam: float
    ops_reduction_vs_ranpac: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def format_text(self) -> str:
        lines = [
            f"concatenated dimension (last {self.k} layers): {self.concat_dim}",
            f"Gram entries:        {self.gram_entries:,}",
            f"prototype entries:   {self.prototype_entries:,}",
            f"solve operations:    {self.solve_ops:.3e}",
            "",
            f"RanPAC baseline:     {self.ranpac_memory:,} entries, {self.ranpac_solve_ops:.3e} ops",
            f"  memory reduction:  {self.memory_reduction_vs_ranpac * 100:.1f}%",
            f"  ops reduction:     {self.ops_reduction_vs_ranpac * 100:.1f}%",
            f"SLCA baseline:       {self.slca_memory:,} entries",
            f"  memory reduction:  {self.memory_reduction_vs_slca * 100:.1f}%",
            f"ADAM baseline:       {self.adam_memory:,} params",
            f"  memory reduction:  {self.memory_reduction_vs_adam * 100:.1f}%",
        ]
        return "\n".join(lines)


def memory_report(k: int, layer_dims: Sequence[int], num_classes: int) -> MemoryReport:
    """Size the engine state for a given configuration and compare it
    against the documented baseline methods.

    Reduction ratios compare the Gram matrix (the configuration-dependent
    state) against each baseline's total additional footprint.
    """
    layer_dims = [int(d) for d in layer_dims]
    if not 1 <= k <= len(layer_dims):
        raise ValueError(f"k={k} out of range for {len(layer_dims)} layers")
    if any(d < 1 for d in layer_dims) or num_classes < 1:
        raise ValueError("layer dims and num_classes must be positive")
    d_concat = sum(layer_dims[len(layer_dims) - k:])
    d_last = layer_dims[-1]
    gram_entries = d_concat**2
    solve_ops = d_concat**3
    ranpac_memory = RANPAC_PROJECTION_DIM**2 + RANPAC_EXTRA_PARAMS
    ranpac_ops = RANPAC_PROJECTION_DIM**3
    slca_memory = num_classes * d_last**2
    slca_ops = num_classes * d_last**3
    adam_memory = ADAM_EXTRA_PARAMS
    return MemoryReport(
        k=k,
        num_classes=num_classes,
        concat_dim=d_concat,
        gram_entries=gram_entries,
        prototype_entries=num_classes * d_concat,
        solve_ops=solve_ops,
        ranpac_memory=ranpac_memory,
        ranpac_solve_ops=ranpac_ops,
        slca_memory=slca_memory,
        slca_solve_ops=slca_ops,
        adam_memory=adam_memory,
        memory_reduction_vs_ranpac=1.0 - gram_entries / ranpac_memory,
        memory_reduction_vs_slca=1.0 - gram_entries / slca_memory,
        memory_reduction_vs_adam=1.0 - gram_entries / adam_memory,
        ops_reduction_vs_ranpac=1.0 - solve_ops / ranpac_ops,
    )


def summary_table(result: RunResult) -> str:
    """Plain-text per-task summary of a run."""
    cfg = result.config
    header = (
        f"protocol={cfg.protocol} classifier={cfg.classifier} k={cfg.k} "
        f"lambda_mode={cfg.lambda_mode} seed={cfg.seed}"
    )
    lines = [header, f"{'task':>4}  {'lambda':>10}  {'A_t':>8}  {'F_t':>8}"]
    for rec in result.per_task:
        lam = "-" if rec.lambda_used is None else f"{rec.lambda_used:g}"
        f_t = "-" if rec.f_t is None else f"{rec.f_t:.4f}"
        lines.append(f"{rec.task:>4}  {lam:>10}  {rec.a_t:.4f}  {f_t:>8}")
    return "\n".join(lines)


def write_run_record(result: RunResult, out_dir: str, basename: str = "run_record") -> str:
    """Write the JSON run record plus a plain-text summary; returns the
    JSON path. Output is byte-deterministic for equal configs and inputs."""
    os.makedirs(out_dir, exist_ok=True)
    record_path = os.path.join(out_dir, f"{basename}.json")
    with open(record_path, "w", encoding="utf-8") as fh:
        json.dump(result.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    summary_path = os.path.join(out_dir, f"{basename}_summary.txt")
    with open(summary_path, "w", encoding="utf-8") as fh:
        fh.write(summary_table(result) + "\n")
    return record_path
