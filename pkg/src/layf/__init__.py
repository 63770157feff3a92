"""Streaming multi-layer feature statistics with closed-form classification.

The engine accumulates a Gram matrix and per-class prototype sums over a
stream of concatenated multi-layer features, derives ridge or cosine
classifiers from them in closed form, and evaluates class-incremental
and online protocols over task streams.
"""

from .accumulator import StatAccumulator, merge
from .core import (
    ConcatFeature,
    LayerFeatureSample,
    StreamManifest,
    TaskStream,
    concat_features,
    validate_sample,
)
from .harness import (
    MemoryReport,
    PerTaskRecord,
    ResultMatrix,
    RunConfig,
    RunResult,
    average_accuracy,
    average_forgetting,
    memory_report,
    per_layer_best_counts,
    run_cil,
    run_ocl,
    universality_fraction,
    write_run_record,
)
from .io import (
    load_checkpoint,
    load_task_stream,
    read_stream,
    save_accumulator,
    save_classifier,
    write_stream,
    write_task_stream,
)
from .lambda_search import (
    DEFAULT_CANDIDATES,
    LambdaSearchConfig,
    LambdaSearchResult,
    optimize_lambda,
    stratified_split,
)
from .solver import (
    Prediction,
    RidgeClassifier,
    ensemble_separate_predict,
    fit_ridge,
    laynmc_predict,
    nmc_predict,
    predict,
)
from .synthgen import SynthConfig, generate_stream

__version__ = "0.1.0"

__all__ = [
    "ConcatFeature",
    "DEFAULT_CANDIDATES",
    "LambdaSearchConfig",
    "LambdaSearchResult",
    "LayerFeatureSample",
    "MemoryReport",
    "PerTaskRecord",
    "Prediction",
    "ResultMatrix",
    "RidgeClassifier",
    "RunConfig",
    "RunResult",
    "StatAccumulator",
    "StreamManifest",
    "SynthConfig",
    "TaskStream",
    "average_accuracy",
    "average_forgetting",
    "concat_features",
    "ensemble_separate_predict",
    "fit_ridge",
    "generate_stream",
    "laynmc_predict",
    "load_checkpoint",
    "load_task_stream",
    "memory_report",
    "merge",
    "nmc_predict",
    "optimize_lambda",
    "per_layer_best_counts",
    "predict",
    "read_stream",
    "run_cil",
    "run_ocl",
    "save_accumulator",
    "save_classifier",
    "stratified_split",
    "universality_fraction",
    "validate_sample",
    "write_run_record",
    "write_stream",
    "write_task_stream",
]
