import json
import struct

import numpy as np
import pytest

from conftest import separable_config
from layf import (
    LayerFeatureSample,
    StatAccumulator,
    StreamManifest,
    concat_features,
    fit_ridge,
    generate_stream,
    load_checkpoint,
    load_task_stream,
    read_stream,
    save_accumulator,
    save_classifier,
    write_stream,
    write_task_stream,
)
from layf.errors import (
    ContractError,
    CorruptionError,
    FormatError,
    UnsupportedVersionError,
)
from layf.io import fnv1a64, manifest_path


def tiny_manifest(dims=(3, 2), num_classes=4):
    return StreamManifest(
        num_layers=len(dims),
        layer_dims=dims,
        num_classes=num_classes,
        task_sizes=(8,),
        task_label_spaces=(frozenset(range(num_classes)),),
        source="test",
    )


def tiny_samples(n, dims=(3, 2), num_classes=4, seed=0):
    rng = np.random.default_rng(seed)
    return [
        LayerFeatureSample(
            tuple(rng.standard_normal(d) for d in dims),
            label=int(rng.integers(num_classes)),
            task_id=0,
        )
        for _ in range(n)
    ]


class TestChecksum:
    def test_reference_vectors(self):
        # published FNV-1a 64-bit test vectors
        assert fnv1a64(b"") == 0xCBF29CE484222325
        assert fnv1a64(b"a") == 0xAF63DC4C8601EC8C
        assert fnv1a64(b"foobar") == 0x85944171F73967E8

    def test_chunked_equals_whole(self):
        data = bytes(range(256)) * 7
        running = fnv1a64(data[:100])
        running = fnv1a64(data[100:], running)
        assert running == fnv1a64(data)


class TestStreamFormat:
    def test_empty_stream_is_exactly_header(self, tmp_path):
        path = tmp_path / "empty.layf"
        manifest = tiny_manifest()
        write_stream([], manifest, path)
        assert path.stat().st_size == 28 + 4 * manifest.num_layers
        loaded, it = read_stream(path)
        assert list(it) == []
        assert loaded.layer_dims == manifest.layer_dims

    def test_record_layout_arithmetic(self, tmp_path):
        # one sample, dims (3, 2), float32: 8 bytes of ids + 4*(3+2) of values
        path = tmp_path / "one.layf"
        write_stream(tiny_samples(1), tiny_manifest(), path)
        header = 28 + 4 * 2
        assert path.stat().st_size == header + 28

    @pytest.mark.parametrize("dtype", ["float32", "float64"])
    def test_roundtrip(self, tmp_path, dtype):
        path = tmp_path / "round.layf"
        samples = tiny_samples(1000, seed=1)
        write_stream(samples, tiny_manifest(), path, dtype=dtype)
        _, iterator = read_stream(path)
        loaded = list(iterator)
        assert len(loaded) == 1000
        for original, again in zip(samples, loaded):
            assert original.label == again.label and original.task_id == again.task_id
            for va, vb in zip(original.layer_features, again.layer_features):
                if dtype == "float64":
                    assert np.array_equal(va, vb)
                else:
                    assert np.array_equal(va.astype(np.float32, copy=False).astype(np.float64), vb)

    def test_reader_is_lazy(self, tmp_path):
        path = tmp_path / "lazy.layf"
        write_stream(tiny_samples(50), tiny_manifest(), path)
        _, iterator = read_stream(path)
        first = next(iterator)
        assert first.label >= 0  # no need to exhaust the iterator

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.layf"
        write_stream(tiny_samples(2), tiny_manifest(), path)
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError, match="magic"):
            read_stream(path)

    def test_future_version(self, tmp_path):
        path = tmp_path / "future.layf"
        write_stream(tiny_samples(2), tiny_manifest(), path)
        raw = bytearray(path.read_bytes())
        raw[4:8] = struct.pack("<I", 2)
        path.write_bytes(bytes(raw))
        with pytest.raises(UnsupportedVersionError):
            read_stream(path)

    def test_truncation_detected_before_yield(self, tmp_path):
        path = tmp_path / "trunc.layf"
        write_stream(tiny_samples(10), tiny_manifest(), path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-7])  # cut mid-record
        with pytest.raises(CorruptionError, match="byte"):
            read_stream(path)

    def test_checksum_mismatch(self, tmp_path):
        path = tmp_path / "flip.layf"
        write_stream(tiny_samples(10), tiny_manifest(), path)
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF  # corrupt payload without changing the length
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptionError, match="checksum"):
            read_stream(path)

    def test_header_manifest_disagreement(self, tmp_path):
        path = tmp_path / "fight.layf"
        write_stream(tiny_samples(4), tiny_manifest(), path)
        meta = json.loads(open(manifest_path(path)).read())
        meta["layer_dims"] = [3, 9]
        with open(manifest_path(path), "w") as fh:
            json.dump(meta, fh)
        with pytest.raises(FormatError):
            read_stream(path)

    def test_invalid_sample_aborts_before_writing(self, tmp_path):
        path = tmp_path / "never.layf"
        bad = LayerFeatureSample((np.zeros(3), np.zeros(2)), label=99, task_id=0)
        with pytest.raises(ContractError):
            write_stream([bad], tiny_manifest(), path)
        assert not path.exists()

    def test_missing_manifest_is_io_error(self, tmp_path):
        path = tmp_path / "orphan.layf"
        write_stream(tiny_samples(2), tiny_manifest(), path)
        (tmp_path / "orphan.layf.manifest.json").unlink()
        with pytest.raises(OSError):
            read_stream(path)


class TestTaskStreamIO:
    def test_roundtrip_through_directory(self, tmp_path):
        stream = generate_stream(separable_config(0, num_tasks=3))
        write_task_stream(stream, tmp_path / "s")
        again = load_task_stream(tmp_path / "s")
        assert again.manifest.task_label_spaces == stream.manifest.task_label_spaces
        assert [len(t) for t in again.train_tasks] == [len(t) for t in stream.train_tasks]
        assert [len(t) for t in again.test_tasks] == [len(t) for t in stream.test_tasks]
        a = stream.train_tasks[0][0].layer_features[0].astype(np.float32)
        b = again.train_tasks[0][0].layer_features[0]
        assert np.array_equal(a.astype(np.float64), b)

    def test_load_via_train_file_path(self, tmp_path):
        stream = generate_stream(separable_config(1, num_tasks=2))
        train_path, _ = write_task_stream(stream, tmp_path / "s")
        again = load_task_stream(train_path)
        assert again.num_tasks == 2

    def test_unrecognized_path(self, tmp_path):
        with pytest.raises(ValueError):
            load_task_stream(tmp_path / "no-such-thing.layf")


class TestCheckpoints:
    def test_empty_accumulator_roundtrip(self, tmp_path):
        acc = StatAccumulator(5, 3, 2)
        path = tmp_path / "acc.layc"
        save_accumulator(acc, path)
        again = load_checkpoint(path)
        assert (again.dim, again.num_classes, again.k) == (5, 3, 2)
        assert np.array_equal(again.gram, acc.gram)
        assert np.array_equal(again.proto_sums, acc.proto_sums)
        assert np.array_equal(again.class_counts, acc.class_counts)

    def test_resume_equals_uninterrupted(self, tmp_path):
        stream = generate_stream(separable_config(2, num_tasks=1))
        samples = list(stream.train_tasks[0])
        k, dim = 4, stream.manifest.concat_dim(4)

        full = StatAccumulator(dim, 10, k)
        for s in samples:
            full.update(concat_features(s, k), s.label)

        half = StatAccumulator(dim, 10, k)
        for s in samples[: len(samples) // 2]:
            half.update(concat_features(s, k), s.label)
        path = tmp_path / "mid.layc"
        save_accumulator(half, path)
        resumed = load_checkpoint(path)
        for s in samples[len(samples) // 2:]:
            resumed.update(concat_features(s, k), s.label)

        np.testing.assert_allclose(resumed.gram, full.gram, rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(resumed.proto_sums, full.proto_sums, rtol=1e-12, atol=1e-14)
        assert np.array_equal(resumed.class_counts, full.class_counts)

    def test_shape_expectations(self, tmp_path):
        acc = StatAccumulator(5, 3, 1)
        path = tmp_path / "acc.layc"
        save_accumulator(acc, path)
        with pytest.raises(ContractError):
            load_checkpoint(path, expect_dim=6)
        with pytest.raises(ContractError):
            load_checkpoint(path, expect_classes=4)

    def test_classifier_roundtrip(self, tmp_path):
        rng = np.random.default_rng(3)
        acc = StatAccumulator(6, 3, 1)
        for _ in range(40):
            acc.update(rng.standard_normal(6), int(rng.integers(3)))
        clf = fit_ridge(acc, 2.0)
        path = tmp_path / "clf.layc"
        save_classifier(clf, path)
        again = load_checkpoint(path)
        assert np.array_equal(again.weights, clf.weights)
        assert again.lam == clf.lam and again.solve_method == clf.solve_method

    def test_corrupted_checkpoint(self, tmp_path):
        acc = StatAccumulator(4, 2, 1)
        acc.update(np.ones(4), 0)
        path = tmp_path / "acc.layc"
        save_accumulator(acc, path)
        raw = bytearray(path.read_bytes())
        raw[-3] ^= 0x42
        path.write_bytes(bytes(raw))
        with pytest.raises(CorruptionError):
            load_checkpoint(path)

    def test_wrong_magic(self, tmp_path):
        path = tmp_path / "x.layc"
        path.write_bytes(b"NOPE" + bytes(32))
        with pytest.raises(FormatError):
            load_checkpoint(path)
