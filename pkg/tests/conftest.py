"""Shared stream builders used across the test modules.

The synthetic configurations here are tuned so the directional
comparisons they feed (multi-layer vs last-layer, shared vs separate,
regularized vs not) hold with wide margins at fixed seeds.
"""

from __future__ import annotations

import numpy as np

from layf import LayerFeatureSample, SynthConfig, generate_stream


def layer_informativeness_config(seed: int) -> SynthConfig:
    """Class information concentrated in layer L-3 of six, with a weak
    last-layer signal so the last-layer-only classifier is above chance
    but clearly worse."""
    num_layers = 6
    weights = [0.0] * num_layers
    weights[num_layers - 4] = 1.0  # layer L-3 (1-based), strongly informative
    weights[num_layers - 1] = 0.35
    return SynthConfig(
        num_layers=num_layers,
        layer_dims=(16,) * num_layers,
        num_classes=20,
        num_tasks=5,
        samples_per_class=30,
        informativeness=tuple(weights),
        coupling=0.2,
        noise_scale=0.22,
        seed=seed,
    )


def correlated_layer_config(seed: int) -> SynthConfig:
    """Strong shared-latent noise across layers (rho=0.7) with weak
    per-layer signal: exploiting cross-layer correlations is the only
    way to classify well."""
    num_layers = 6
    return SynthConfig(
        num_layers=num_layers,
        layer_dims=(16,) * num_layers,
        num_classes=20,
        num_tasks=5,
        samples_per_class=30,
        informativeness=(0.3,) * num_layers,
        coupling=0.7,
        noise_scale=0.8,
        seed=seed,
    )


def separable_config(seed: int, num_tasks: int = 5) -> SynthConfig:
    """Well-separated class means: every classifier should be near-perfect."""
    return SynthConfig(
        num_layers=4,
        layer_dims=(8,) * 4,
        num_classes=10,
        num_tasks=num_tasks,
        samples_per_class=20,
        informativeness=(1.0,) * 4,
        coupling=0.1,
        noise_scale=0.05,
        seed=seed,
    )


def ill_conditioned_config(seed: int) -> SynthConfig:
    """Near-duplicate features (all layers identical) with the sample
    count at the effective dimension, where the unregularized solve is
    noise-dominated."""
    return SynthConfig(
        num_layers=4,
        layer_dims=(24,) * 4,
        num_classes=6,
        num_tasks=5,
        samples_per_class=4,
        informativeness=(1.0,) * 4,
        coupling=0.0,
        noise_scale=0.5,
        mean_scale=4.0,
        test_fraction=0.6,
        duplicate_layers=True,
        seed=seed,
    )


def overparameterized_task(seed: int, per_class: int) -> list[LayerFeatureSample]:
    """Single noisy task with 240-dim concatenated features whose noise
    lives in a 48-dimensional block: with 60 samples the 80:20 fit part
    sits exactly at the interpolation threshold of that block, where the
    unregularized solve is unstable; with ~2000 samples every candidate
    saturates.
    """
    dims = (80, 80, 80)
    total = sum(dims)
    num_classes, noisy_rank = 6, 48
    rng = np.random.default_rng([seed, per_class])
    scales = np.full(total, 0.02)
    scales[:noisy_rank] = 2.0
    mean_rng = np.random.default_rng([seed, 7])
    means = np.zeros((num_classes, total))
    for c in range(num_classes):
        direction = mean_rng.standard_normal(noisy_rank)
        means[c, :noisy_rank] = direction / np.linalg.norm(direction) * 16.0
    samples = []
    for c in range(num_classes):
        for _ in range(per_class):
            vec = means[c] + rng.standard_normal(total) * scales
            samples.append(
                LayerFeatureSample(
                    (vec[:80], vec[80:160], vec[160:]), label=c, task_id=0
                )
            )
    return samples


def make_stream(cfg: SynthConfig):
    return generate_stream(cfg)
