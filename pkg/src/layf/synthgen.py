"""Deterministic synthetic multi-layer feature streams.

Gaussian class-conditional model with three independently tunable knobs:
per-layer informativeness (how far apart class means sit at each layer),
cross-layer coupling (a per-sample latent mixed into every layer, which
makes noise correlated across layers), and overall noise scale. Classes
are partitioned over tasks after a seeded shuffle, mirroring the usual
split-dataset construction. Generation is a pure function of the config,
including the seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import LayerFeatureSample, StreamManifest, TaskStream
from .errors import ConfigError


@dataclass(frozen=True)
class SynthConfig:
    num_layers: int
    layer_dims: tuple[int, ...]
    num_classes: int
    num_tasks: int
    samples_per_class: int
    # per-layer class-mean separation weights s_l in [0, 1]
    informativeness: tuple[float, ...]
    # optional per-class override: 1-based layer that carries the class's
    # signal; replaces the informativeness profile for mean construction
    class_informative_layer: tuple[int, ...] | None = None
    coupling: float = 0.0  # fraction of layer noise drawn from a shared latent
    noise_scale: float = 0.1
    test_fraction: float = 0.2
    seed: int = 0
    # make every layer an exact copy of the last one (redundancy fixture)
    duplicate_layers: bool = False
    mean_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layer_dims", tuple(int(d) for d in self.layer_dims))
        object.__setattr__(
            self, "informativeness", tuple(float(s) for s in self.informativeness)
        )
        if self.class_informative_layer is not None:
            object.__setattr__(
                self,
                "class_informative_layer",
                tuple(int(l) for l in self.class_informative_layer),
            )
        if self.num_layers < 1 or self.num_classes < 1 or self.num_tasks < 1:
            raise ConfigError("layers, classes, and tasks must all be positive")
        if len(self.layer_dims) != self.num_layers or any(d < 1 for d in self.layer_dims):
            raise ConfigError(f"need {self.num_layers} positive layer dims, got {self.layer_dims}")
        if self.samples_per_class < 1:
            raise ConfigError(f"samples_per_class must be >= 1, got {self.samples_per_class}")
        if len(self.informativeness) != self.num_layers:
            raise ConfigError(
                f"informativeness has {len(self.informativeness)} entries, "
                f"expected {self.num_layers}"
            )
        if any(not 0.0 <= s <= 1.0 for s in self.informativeness):
            raise ConfigError(f"informativeness weights must lie in [0, 1]")
        if self.class_informative_layer is None:
            if not any(s > 0 for s in self.informativeness):
                raise ConfigError("at least one layer must be informative (some s_l > 0)")
        else:
            if len(self.class_informative_layer) != self.num_classes:
                raise ConfigError(
                    "class_informative_layer needs one (1-based) layer per class"
                )
            if any(not 1 <= l <= self.num_layers for l in self.class_informative_layer):
                raise ConfigError("class_informative_layer entries must be in [1, L]")
        if not 0.0 <= self.coupling <= 1.0:
            raise ConfigError(f"coupling must lie in [0, 1], got {self.coupling}")
        if self.noise_scale <= 0:
            raise ConfigError(f"noise_scale must be > 0, got {self.noise_scale}")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError(f"test_fraction must lie in (0, 1), got {self.test_fraction}")
        if self.num_tasks > self.num_classes:
            raise ConfigError(
                f"cannot partition {self.num_classes} classes over {self.num_tasks} tasks"
            )
        if self.duplicate_layers and len(set(self.layer_dims)) != 1:
            raise ConfigError("duplicate_layers requires all layer dims equal")


def _class_rng(seed: int, stream: int, class_id: int) -> np.random.Generator:
    # independent per-class substream, derived only from (seed, class id)
    return np.random.default_rng(np.random.SeedSequence([seed % 2**64, stream, class_id]))


def _class_means(cfg: SynthConfig, class_id: int) -> list[np.ndarray]:
    rng = _class_rng(cfg.seed, 1, class_id)
    means = []
    for l in range(cfg.num_layers):
        direction = rng.standard_normal(cfg.layer_dims[l])
        direction /= np.linalg.norm(direction)
        if cfg.class_informative_layer is not None:
            weight = 1.0 if (l + 1) == cfg.class_informative_layer[class_id] else 0.0
        else:
            weight = cfg.informativeness[l]
        means.append(cfg.mean_scale * weight * direction)
    return means


def _mixing_maps(cfg: SynthConfig, latent_dim: int) -> list[np.ndarray]:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed % 2**64, 2]))
    return [
        rng.standard_normal((d, latent_dim)) / np.sqrt(latent_dim) for d in cfg.layer_dims
    ]


def _draw_sample(cfg, rng, means, mixing, latent_dim, task_id, class_id) -> LayerFeatureSample:
    sigma, rho = cfg.noise_scale, cfg.coupling
    if cfg.duplicate_layers:
        last = cfg.num_layers - 1
        z = rng.standard_normal(latent_dim)
        eps = rng.standard_normal(cfg.layer_dims[last])
        vec = means[last] + sigma * (rho * (mixing[last] @ z) + (1.0 - rho) * eps)
        layers = [vec.copy() for _ in range(cfg.num_layers)]
    else:
        z = rng.standard_normal(latent_dim)
        layers = []
        for l in range(cfg.num_layers):
            eps = rng.standard_normal(cfg.layer_dims[l])
            layers.append(means[l] + sigma * (rho * (mixing[l] @ z) + (1.0 - rho) * eps))
    return LayerFeatureSample(tuple(layers), label=class_id, task_id=task_id)


def generate_stream(cfg: SynthConfig) -> TaskStream:
    """Generate a deterministic task stream with train and test splits.

    Each class trains with exactly ``samples_per_class`` samples and
    tests with ``max(1, round(samples_per_class * test_fraction))``
    samples drawn from the same distribution.
    """
    latent_dim = max(cfg.layer_dims)
    mixing = _mixing_maps(cfg, latent_dim)

    shuffle_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed % 2**64, 4]))
    class_order = shuffle_rng.permutation(cfg.num_classes)
    groups = np.array_split(class_order, cfg.num_tasks)

    n_test = max(1, round(cfg.samples_per_class * cfg.test_fraction))
    train_tasks: list[list[LayerFeatureSample]] = []
    test_tasks: list[list[LayerFeatureSample]] = []
    for t, group in enumerate(groups):
        train: list[LayerFeatureSample] = []
        test: list[LayerFeatureSample] = []
        for class_id in group.tolist():
            means = _class_means(cfg, class_id)
            rng = _class_rng(cfg.seed, 3, class_id)
            for _ in range(cfg.samples_per_class):
                train.append(_draw_sample(cfg, rng, means, mixing, latent_dim, t, class_id))
            for _ in range(n_test):
                test.append(_draw_sample(cfg, rng, means, mixing, latent_dim, t, class_id))
        # interleave classes within the task, deterministically per task
        order_rng = np.random.default_rng(np.random.SeedSequence([cfg.seed % 2**64, 5, t]))
        train = [train[i] for i in order_rng.permutation(len(train))]
        train_tasks.append(train)
        test_tasks.append(test)

    manifest = StreamManifest(
        num_layers=cfg.num_layers,
        layer_dims=cfg.layer_dims,
        num_classes=cfg.num_classes,
        task_sizes=tuple(len(t) for t in train_tasks),
        task_label_spaces=tuple(frozenset(g.tolist()) for g in groups),
        source=f"synthgen(seed={cfg.seed})",
    )
    return TaskStream(manifest, tuple(map(tuple, train_tasks)), tuple(map(tuple, test_tasks)))
