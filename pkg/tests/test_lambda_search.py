import numpy as np
import pytest

from conftest import overparameterized_task, separable_config
from layf import (
    LambdaSearchConfig,
    StatAccumulator,
    concat_features,
    generate_stream,
    optimize_lambda,
    stratified_split,
)
from layf.errors import ConfigError, ContractError


def make_task(per_class, num_classes=5, dims=(6, 6), seed=0):
    from layf import LayerFeatureSample

    rng = np.random.default_rng(seed)
    samples = []
    for c in range(num_classes):
        mean = rng.standard_normal(sum(dims)) * 2.0
        for _ in range(per_class):
            vec = mean + 0.3 * rng.standard_normal(sum(dims))
            samples.append(
                LayerFeatureSample((vec[: dims[0]], vec[dims[0]:]), label=c, task_id=0)
            )
    order = rng.permutation(len(samples))
    return [samples[i] for i in order]


def plain_accumulation(task, k, dim, num_classes):
    acc = StatAccumulator(dim, num_classes, k)
    for s in task:
        acc.update(concat_features(s, k), s.label)
    return acc


class TestConfig:
    def test_defaults_are_the_documented_grid(self):
        cfg = LambdaSearchConfig()
        assert cfg.candidates == (1e-3, 1e-2, 1e-1, 1.0, 10.0, 100.0, 1000.0)
        assert cfg.split_fraction == 0.8

    def test_empty_candidates(self):
        with pytest.raises(ConfigError):
            LambdaSearchConfig(candidates=())

    def test_negative_candidate(self):
        with pytest.raises(ConfigError):
            LambdaSearchConfig(candidates=(1.0, -2.0))

    @pytest.mark.parametrize("fraction", [0.0, 1.0, -0.1, 1.5])
    def test_bad_fraction(self, fraction):
        with pytest.raises(ConfigError):
            LambdaSearchConfig(split_fraction=fraction)


class TestStratifiedSplit:
    def test_eighty_twenty(self):
        task = make_task(10, num_classes=1)
        fit, holdout = stratified_split(task, 0.8, seed=0)
        assert len(fit) == 8 and len(holdout) == 2

    def test_singleton_class_goes_to_fit(self):
        task = make_task(1, num_classes=3)
        fit, holdout = stratified_split(task, 0.8, seed=0)
        assert len(fit) == 3 and len(holdout) == 0

    def test_ceiling_rounding(self):
        # ceil(0.8 * 3) = 3: everything lands in the fit part
        task = make_task(3, num_classes=2)
        fit, holdout = stratified_split(task, 0.8, seed=1)
        assert len(fit) == 6 and len(holdout) == 0

    def test_per_class_counts(self):
        task = make_task(20, num_classes=5)
        fit, holdout = stratified_split(task, 0.8, seed=2)
        for c in range(5):
            assert sum(1 for s in fit if s.label == c) == 16
            assert sum(1 for s in holdout if s.label == c) == 4

    def test_deterministic_and_seed_sensitive(self):
        task = make_task(20, num_classes=5, seed=3)

        def keys(split):
            return [id(s) for s in split[0]], [id(s) for s in split[1]]

        first = keys(stratified_split(task, 0.8, seed=7))
        second = keys(stratified_split(task, 0.8, seed=7))
        other = keys(stratified_split(task, 0.8, seed=8))
        assert first == second
        assert first != other

    def test_preserves_stream_order(self):
        task = make_task(10, num_classes=4, seed=4)
        positions = {id(s): i for i, s in enumerate(task)}
        fit, holdout = stratified_split(task, 0.8, seed=5)
        for part in (fit, holdout):
            idx = [positions[id(s)] for s in part]
            assert idx == sorted(idx)

    def test_empty_task(self):
        with pytest.raises(ContractError):
            stratified_split([], 0.8, seed=0)


class TestOptimizeLambda:
    def test_single_candidate(self):
        task = make_task(10, seed=6)
        acc = StatAccumulator(12, 5, 2)
        result = optimize_lambda(acc, task, LambdaSearchConfig(candidates=(1.0,), seed=0), 2)
        assert result.best_lambda == 1.0
        oracle = plain_accumulation(task, 2, 12, 5)
        np.testing.assert_allclose(result.accumulator.gram, oracle.gram, rtol=1e-10, atol=1e-12)

    def test_state_preservation(self):
        task = make_task(12, seed=7)
        acc = StatAccumulator(12, 5, 2)
        # preload with another task: the search must not disturb prior state
        preload = make_task(6, seed=8)
        for s in preload:
            acc.update(concat_features(s, 2), s.label)
        result = optimize_lambda(acc, task, LambdaSearchConfig(seed=1), 2)
        oracle = plain_accumulation(preload + task, 2, 12, 5)
        np.testing.assert_allclose(result.accumulator.gram, oracle.gram, rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(
            result.accumulator.proto_sums, oracle.proto_sums, rtol=1e-10, atol=1e-12
        )
        assert np.array_equal(result.accumulator.class_counts, oracle.class_counts)

    def test_result_independent_of_winner(self):
        # two disjoint candidate sets, same split: identical statistics out
        task = make_task(10, seed=9)
        out = []
        for candidates in ((0.001,), (1000.0,)):
            acc = StatAccumulator(12, 5, 2)
            result = optimize_lambda(
                acc, task, LambdaSearchConfig(candidates=candidates, seed=2), 2
            )
            out.append(result.accumulator)
        assert np.array_equal(out[0].gram, out[1].gram)

    def test_determinism(self):
        task = make_task(15, seed=10)
        results = []
        for _ in range(2):
            acc = StatAccumulator(12, 5, 2)
            results.append(optimize_lambda(acc, task, LambdaSearchConfig(seed=3), 2))
        assert results[0].best_lambda == results[1].best_lambda
        assert results[0].candidate_accuracies == results[1].candidate_accuracies

    def test_best_lambda_is_a_candidate(self):
        task = make_task(10, seed=11)
        cfg = LambdaSearchConfig(candidates=(0.5, 2.0, 8.0), seed=4)
        acc = StatAccumulator(12, 5, 2)
        result = optimize_lambda(acc, task, cfg, 2)
        assert result.best_lambda in cfg.candidates

    def test_tie_breaks_toward_smaller_lambda(self):
        # trivially separable task: every candidate scores 1.0 on the holdout
        stream = generate_stream(separable_config(0, num_tasks=1))
        task = list(stream.train_tasks[0])
        acc = StatAccumulator(stream.manifest.concat_dim(4), 10, 4)
        result = optimize_lambda(acc, task, LambdaSearchConfig(seed=5), 4)
        accuracies = [a for _, a in result.candidate_accuracies]
        assert accuracies == [1.0] * len(accuracies)
        assert result.best_lambda == min(LambdaSearchConfig().candidates)

    def test_overparameterized_regime_prefers_larger_lambda(self):
        # 60 samples against 240 concatenated dims: the 80:20 fit part sits
        # at the noisy block's interpolation threshold, so the nearly
        # unregularized solve degrades and a larger candidate wins; with
        # ~2000 samples every candidate saturates and the tie-break picks
        # the smallest. Checked as a paired trend over ten seeds.
        wins = 0
        for seed in range(10):
            chosen = []
            for per_class in (10, 334):
                acc = StatAccumulator(240, 6, 3)
                result = optimize_lambda(
                    acc,
                    overparameterized_task(seed, per_class),
                    LambdaSearchConfig(seed=seed),
                    3,
                )
                chosen.append(result.best_lambda)
            wins += chosen[0] > chosen[1]
        assert wins >= 8

    def test_empty_candidate_config_rejected_before_split(self):
        with pytest.raises(ConfigError):
            LambdaSearchConfig(candidates=())
