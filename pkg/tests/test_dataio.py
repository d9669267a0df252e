import json
import tempfile
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchcrf.core import EmbeddingMatrix
from patchcrf.dataio import (
    CorruptFileError,
    FormatError,
    ManifestError,
    SyntheticSpec,
    generate_synthetic,
    load_dataset,
    read_embedding_header,
    read_embeddings,
    read_labels,
    write_embeddings,
    write_labels,
)

GOLDEN_1X1 = bytes.fromhex(
    "454d4231" "01" "01" "0000" "0100000000000000" "01000000" "00000000"
)


class TestEmb1Format:
    def test_smallest_instance_golden_bytes(self, tmp_path):
        path = tmp_path / "one.emb"
        write_embeddings(EmbeddingMatrix(np.array([[0.0]])), path)
        assert path.read_bytes() == GOLDEN_1X1
        assert len(GOLDEN_1X1) == 24

    def test_round_trip_random_matrix(self, tmp_path):
        rng = np.random.default_rng(0)
        m = rng.standard_normal((100, 32)).astype(np.float32).astype(np.float64)
        path = tmp_path / "m.emb"
        write_embeddings(EmbeddingMatrix(m), path)
        back = read_embeddings(path)
        np.testing.assert_array_equal(back.data, m)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(b"EMB2" + GOLDEN_1X1[4:])
        with pytest.raises(FormatError, match="unsupported format"):
            read_embeddings(path)

    def test_bad_version(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(GOLDEN_1X1[:4] + b"\x02" + GOLDEN_1X1[5:])
        with pytest.raises(FormatError, match="unsupported format"):
            read_embeddings(path)

    def test_bad_dtype(self, tmp_path):
        path = tmp_path / "bad.emb"
        path.write_bytes(GOLDEN_1X1[:5] + b"\x07" + GOLDEN_1X1[6:])
        with pytest.raises(FormatError, match="unsupported format"):
            read_embeddings(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.emb"
        path.write_bytes(GOLDEN_1X1[:-2])
        with pytest.raises(CorruptFileError, match="corrupt file"):
            read_embeddings(path)

    def test_trailing_garbage(self, tmp_path):
        path = tmp_path / "long.emb"
        path.write_bytes(GOLDEN_1X1 + b"\x00")
        with pytest.raises(CorruptFileError, match="corrupt file"):
            read_embeddings(path)

    def test_header_peek(self, tmp_path):
        path = tmp_path / "m.emb"
        write_embeddings(EmbeddingMatrix(np.ones((7, 3))), path)
        assert read_embedding_header(path) == (7, 3)

    @given(
        rows=st.integers(1, 12),
        dim=st.integers(1, 9),
        seed=st.integers(0, 2**31),
        scale=st.floats(1e-3, 1e6),
    )
    @settings(max_examples=60, deadline=None)
    def test_round_trip_property(self, rows, dim, seed, scale):
        rng = np.random.default_rng(seed)
        m = (rng.standard_normal((rows, dim)) * scale).astype(np.float32)
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "p.emb"
            write_embeddings(EmbeddingMatrix(m.astype(np.float64)), path)
            np.testing.assert_array_equal(
                read_embeddings(path).data, m.astype(np.float64)
            )


class TestLabelsFile:
    def test_round_trip(self, tmp_path):
        path = tmp_path / "labels.txt"
        write_labels(np.array([0, 2, 1]), path)
        assert path.read_text() == "0\n2\n1\n"
        np.testing.assert_array_equal(read_labels(path), [0, 2, 1])


class TestSyntheticGeneration:
    def test_clean_data_is_perfectly_classified(self, tmp_path):
        # well separated clusters: zero-shot argmax must be exact
        spec = SyntheticSpec(
            num_classes=3, patches_per_class=10, cluster_separation=1.0, unary_noise=0.0, seed=5
        )
        summary = generate_synthetic(spec, tmp_path)
        assert summary.zero_shot_accuracy == 1.0
        assert summary.corrupted_indices.size == 0

    def test_full_noise_accuracy_matches_bookkeeping(self, tmp_path):
        spec = SyntheticSpec(
            num_classes=3, patches_per_class=10, cluster_separation=1.0, unary_noise=1.0, seed=5
        )
        summary = generate_synthetic(spec, tmp_path)
        assert summary.corrupted_indices.size == 30
        # every patch was redrawn from a wrong class; accuracy collapses to
        # (at most) chance
        assert summary.zero_shot_accuracy <= 1 / 3
        ds = load_dataset(summary.manifest_path)
        measured = np.mean(
            np.argmax(ds.unary.data @ ds.text.data.T, axis=1) == ds.labels
        )
        assert measured == pytest.approx(summary.zero_shot_accuracy, abs=1e-12)

    def test_same_seed_byte_identical(self, tmp_path):
        spec = SyntheticSpec(num_classes=3, patches_per_class=7, unary_noise=0.4, seed=11)
        a = generate_synthetic(spec, tmp_path / "a")
        b = generate_synthetic(spec, tmp_path / "b")
        for name in ("unary.emb", "pairwise.emb", "text.emb", "labels.txt", "manifest.json"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        np.testing.assert_array_equal(a.corrupted_indices, b.corrupted_indices)

    def test_accuracy_non_increasing_in_noise(self, tmp_path):
        # monotone trend of the mean across seeds
        levels = [0.0, 0.25, 0.5, 0.75, 1.0]
        means = []
        for noise in levels:
            accs = [
                generate_synthetic(
                    SyntheticSpec(
                        num_classes=3, patches_per_class=60, unary_noise=noise, seed=seed
                    ),
                    tmp_path / f"n{noise}s{seed}",
                ).zero_shot_accuracy
                for seed in (0, 1, 2)
            ]
            means.append(np.mean(accs))
        assert all(means[i] >= means[i + 1] for i in range(len(means) - 1))


class TestLoadDataset:
    def test_load_generated(self, tmp_path):
        spec = SyntheticSpec(num_classes=3, patches_per_class=10, seed=1)
        summary = generate_synthetic(spec, tmp_path)
        ds = load_dataset(summary.manifest_path)
        assert ds.num_patches == 30
        assert ds.num_classes == 3
        assert ds.labels is not None and ds.labels.shape == (30,)
        assert ds.grid is not None

    def test_short_labels_file_rejected(self, tmp_path):
        spec = SyntheticSpec(num_classes=2, patches_per_class=5, seed=2)
        summary = generate_synthetic(spec, tmp_path)
        labels = read_labels(tmp_path / "labels.txt")
        write_labels(labels[:-1], tmp_path / "labels.txt")
        with pytest.raises(ManifestError, match="manifest mismatch"):
            load_dataset(summary.manifest_path)

    def test_labels_optional(self, tmp_path):
        spec = SyntheticSpec(num_classes=2, patches_per_class=5, seed=3)
        summary = generate_synthetic(spec, tmp_path)
        doc = json.loads(summary.manifest_path.read_text())
        del doc["labels_path"]
        summary.manifest_path.write_text(json.dumps(doc))
        ds = load_dataset(summary.manifest_path)
        assert ds.labels is None
        with pytest.raises(ValueError, match="labels"):
            ds.require_labels()

    def test_wrong_patch_count_rejected(self, tmp_path):
        spec = SyntheticSpec(num_classes=2, patches_per_class=5, seed=4)
        summary = generate_synthetic(spec, tmp_path)
        doc = json.loads(summary.manifest_path.read_text())
        doc["num_patches"] = 99
        summary.manifest_path.write_text(json.dumps(doc))
        with pytest.raises(ManifestError, match="manifest mismatch"):
            load_dataset(summary.manifest_path)

    def test_missing_file_rejected(self, tmp_path):
        spec = SyntheticSpec(num_classes=2, patches_per_class=5, seed=4)
        summary = generate_synthetic(spec, tmp_path)
        (tmp_path / "pairwise.emb").unlink()
        with pytest.raises(ManifestError, match="manifest mismatch"):
            load_dataset(summary.manifest_path)
