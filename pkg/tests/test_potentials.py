import itertools
import math

import numpy as np
import pytest

from patchcrf.core import AnnotationSet, ClassTextEmbeddings, EmbeddingMatrix
from patchcrf.neighborhood import SampledNeighborhoods
from patchcrf.potentials import (
    PROBABILITY_FLOOR,
    PairwiseWeights,
    UnaryField,
    annotation_pair,
    compute_energy,
    compute_unary,
    diversity_pair,
)

from .oracles import naive_energy


def _nbrs(base_ids, base_sims, ann_edges=None):
    return SampledNeighborhoods(
        base_ids=np.asarray(base_ids, dtype=np.int64),
        base_sims=np.asarray(base_sims, dtype=np.float64),
        ann_edges=ann_edges or {},
        iteration=0,
    )


class TestComputeUnary:
    def test_aligned_patch_and_floor(self):
        # patch sits exactly on class 0's text embedding, orthogonal to class 1
        patches = EmbeddingMatrix(np.array([[1.0, 0.0]]))
        text = ClassTextEmbeddings(np.array([[1.0, 0.0], [0.0, 1.0]]), ("a", "b"))
        unary = compute_unary(patches, text, temperature=0.01)
        assert unary.data[0, 0] == pytest.approx(0.0, abs=1e-10)
        # the raw softmax over logits (100, 0) puts ~e^-100 on class 1, which
        # is below the probability floor, so the potential saturates at
        # -log(floor) rather than at ~100
        assert unary.data[0, 1] == pytest.approx(-math.log(PROBABILITY_FLOOR), abs=1e-9)

    def test_equidistant_gives_log_l(self):
        patches = EmbeddingMatrix(np.array([[1.0, 1.0, 0.0]]))
        text = ClassTextEmbeddings(
            np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]), ("a", "b")
        )
        unary = compute_unary(patches, text, temperature=0.5)
        np.testing.assert_allclose(unary.data[0], [math.log(2)] * 2, atol=1e-12)

    def test_tied_similarities_any_temperature(self):
        patches = EmbeddingMatrix(np.array([[1.0, 1.0]]))
        text = ClassTextEmbeddings(np.array([[1.0, 0.0], [0.0, 1.0]]), ("a", "b"))
        for t in (0.01, 0.3, 7.0):
            unary = compute_unary(patches, text, temperature=t)
            np.testing.assert_allclose(unary.data[0], [math.log(2)] * 2, atol=1e-12)

    def test_rows_are_distributions(self):
        rng = np.random.default_rng(3)
        patches = EmbeddingMatrix(rng.standard_normal((20, 8)))
        text = ClassTextEmbeddings(rng.standard_normal((4, 8)), tuple("abcd"))
        unary = compute_unary(patches, text, temperature=0.05)
        sums = np.exp(-unary.data).sum(axis=1)
        assert np.max(np.abs(sums - 1.0)) <= 1e-9
        assert np.all(unary.data >= 0.0)

    def test_zero_norm_row_named(self):
        patches = EmbeddingMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]))
        text = ClassTextEmbeddings(np.eye(2), ("a", "b"))
        with pytest.raises(ValueError, match="row 1"):
            compute_unary(patches, text)

    def test_dim_mismatch(self):
        patches = EmbeddingMatrix(np.ones((2, 3)))
        text = ClassTextEmbeddings(np.eye(2), ("a", "b"))
        with pytest.raises(ValueError, match="dim"):
            compute_unary(patches, text)


class TestPairTerms:
    def test_diversity_values(self):
        assert diversity_pair(1.0, True) == 0.0
        assert diversity_pair(0.0, True) == 1.0
        assert diversity_pair(0.7, False) == 0.0
        # negative similarity flows through unclipped
        assert diversity_pair(-0.5, True) == 1.5

    def test_annotation_values(self):
        assert annotation_pair(0.9, False) == pytest.approx(0.9)
        assert annotation_pair(0.9, True) == 0.0
        assert annotation_pair(0.0, False) == 0.0
        assert annotation_pair(-0.3, False) == pytest.approx(-0.3)

    def test_diversity_bounds(self):
        for sim in np.linspace(-1, 1, 21):
            v = diversity_pair(float(sim), True)
            assert 0.0 <= v <= 2.0
            assert (v == 0.0) == (sim == 1.0)


def _uniform_unary(n, l):
    return UnaryField(np.full((n, l), math.log(l)), temperature=1.0)


class TestComputeEnergy:
    def test_unary_reduction(self):
        unary = _uniform_unary(2, 2)
        nbrs = _nbrs([[1], [0]], [[0.5], [0.5]])
        e = compute_energy([0, 1], unary, nbrs, AnnotationSet(), PairwiseWeights(0.0, 0.0))
        assert e == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_two_vertex_same_label(self):
        unary = _uniform_unary(2, 2)
        nbrs = _nbrs([[1], [0]], [[0.5], [0.5]])
        e = compute_energy([0, 0], unary, nbrs, AnnotationSet(), PairwiseWeights(1.0, 0.0))
        assert e == pytest.approx(2 * math.log(2) + 2 * 0.5, abs=1e-12)

    def test_two_vertex_different_labels(self):
        unary = _uniform_unary(2, 2)
        nbrs = _nbrs([[1], [0]], [[0.5], [0.5]])
        e = compute_energy([0, 1], unary, nbrs, AnnotationSet(), PairwiseWeights(1.0, 0.0))
        assert e == pytest.approx(2 * math.log(2), abs=1e-12)

    def test_label_out_of_range(self):
        unary = _uniform_unary(2, 2)
        nbrs = _nbrs([[1], [0]], [[0.5], [0.5]])
        with pytest.raises(ValueError, match="out of range"):
            compute_energy([0, 2], unary, nbrs, AnnotationSet(), PairwiseWeights())

    def test_matches_naive_energy_with_annotations(self):
        rng = np.random.default_rng(9)
        n, l, k = 4, 3, 2
        phi = -np.log(
            np.maximum(rng.dirichlet(np.ones(l), size=n), 1e-12)
        )
        unary = UnaryField(phi, temperature=1.0)
        ids = np.array([rng.choice([w for w in range(n) if w != v], k, replace=False) for v in range(n)])
        sims = rng.uniform(-1, 1, (n, k))
        ann_edges = {0: (np.array([2, 3]), np.array([0.8, -0.1]))}
        nbrs = _nbrs(ids, sims, ann_edges)
        ann = AnnotationSet({0: 1})
        for labeling in itertools.product(range(l), repeat=n):
            got = compute_energy(list(labeling), unary, nbrs, ann, PairwiseWeights(0.3, 0.2))
            want = naive_energy(list(labeling), phi, ids, sims, ann_edges, 0.3, 0.2)
            assert got == pytest.approx(want, abs=1e-12)

    def test_zero_pairwise_argmin_is_per_vertex(self):
        # argmin over all labelings == per-vertex argmin of unary when the
        # pairwise terms are off; exhaustive over N<=4, L<=3
        rng = np.random.default_rng(17)
        for n, l in [(2, 2), (3, 3), (4, 2), (4, 3)]:
            phi = -np.log(np.maximum(rng.dirichlet(np.ones(l), size=n), 1e-12))
            unary = UnaryField(phi, temperature=1.0)
            ids = np.array(
                [rng.choice([w for w in range(n) if w != v], 1) for v in range(n)]
            )
            sims = rng.uniform(-1, 1, (n, 1))
            nbrs = _nbrs(ids, sims)
            best = min(
                itertools.product(range(l), repeat=n),
                key=lambda lab: compute_energy(
                    list(lab), unary, nbrs, AnnotationSet(), PairwiseWeights(0.0, 0.0)
                ),
            )
            np.testing.assert_array_equal(best, np.argmin(phi, axis=1))


class TestPairwiseWeights:
    def test_defaults(self):
        w = PairwiseWeights()
        assert w.alpha == 0.1 and w.beta == 0.01

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            PairwiseWeights(alpha=-0.1)
