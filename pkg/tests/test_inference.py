import math

import numpy as np
import pytest

from patchcrf.core import AnnotationSet, Beliefs, ClassTextEmbeddings, EmbeddingMatrix
from patchcrf.dataio import Dataset
from patchcrf.inference import EngineConfig, RefinementState, mean_field_step, refine
from patchcrf.neighborhood import SampledNeighborhoods, build_index, resample
from patchcrf.potentials import PairwiseWeights, UnaryField

from .oracles import naive_mean_field_step


def random_dataset(rng, n, l, d_unary=6, d_pairwise=5) -> Dataset:
    unary = EmbeddingMatrix(rng.standard_normal((n, d_unary)))
    pairwise = EmbeddingMatrix(rng.standard_normal((n, d_pairwise)))
    text = ClassTextEmbeddings(
        rng.standard_normal((l, d_unary)), tuple(f"c{i}" for i in range(l))
    )
    labels = rng.integers(0, l, size=n)
    return Dataset(name="random", unary=unary, pairwise=pairwise, text=text, labels=labels)


def random_instance(rng, n=None, l=None):
    """A random small instance with fixed neighborhoods (pool_factor=1)."""
    n = n or int(rng.integers(2, 5))
    l = l or int(rng.integers(2, 4))
    ds = random_dataset(rng, n, l)
    k = int(rng.integers(1, n))
    index = build_index(ds.pairwise, k_base=k, k_ann=min(2, n - 1), pool_factor=1, seed=7)
    phi = -np.log(np.maximum(rng.dirichlet(np.ones(l), size=n), 1e-12))
    unary = UnaryField(phi, temperature=1.0)
    q = Beliefs(rng.dirichlet(np.ones(l), size=n), iteration=0)
    ann = AnnotationSet()
    if rng.random() < 0.6:
        for v in rng.choice(n, size=int(rng.integers(1, n)), replace=False):
            ann, _ = ann.with_annotation(int(v), int(rng.integers(0, l)))
    return ds, index, unary, q, ann


class TestMeanFieldStepOracle:
    @pytest.mark.parametrize("seed", range(30))
    def test_matches_exhaustive_summation(self, seed):
        rng = np.random.default_rng(seed)
        _, index, unary, q, ann = random_instance(rng)
        alpha = float(rng.uniform(0.0, 1.5))
        beta = float(rng.uniform(0.0, 1.0))
        damping = float(rng.choice([0.0, 0.3]))
        clamp = bool(rng.random() < 0.5)
        config = EngineConfig(
            weights=PairwiseWeights(alpha, beta), damping=damping, clamp_annotations=clamp
        )
        nbrs = resample(index, ann, iteration=0)
        got = mean_field_step(q, unary, nbrs, ann, config)
        want = naive_mean_field_step(
            q.data,
            unary.data,
            nbrs.base_ids,
            nbrs.base_sims,
            nbrs.ann_edges,
            dict(ann.entries),
            alpha,
            beta,
            damping=damping,
            clamp=clamp,
        )
        assert np.max(np.abs(got.data - want)) <= 1e-12

    @pytest.mark.parametrize("seed", range(8))
    def test_smoothing_variant_matches_oracle(self, seed):
        rng = np.random.default_rng(1000 + seed)
        _, index, unary, q, ann = random_instance(rng)
        config = EngineConfig(
            weights=PairwiseWeights(0.7, 0.2), pairwise_term="smoothing"
        )
        nbrs = resample(index, ann, iteration=0, base_pool="similar")
        got = mean_field_step(q, unary, nbrs, ann, config)
        want = naive_mean_field_step(
            q.data,
            unary.data,
            nbrs.base_ids,
            nbrs.base_sims,
            nbrs.ann_edges,
            dict(ann.entries),
            0.7,
            0.2,
            pairwise_term="smoothing",
        )
        assert np.max(np.abs(got.data - want)) <= 1e-12


class TestReductionsAndClamping:
    def test_zero_pairwise_returns_unary_softmax(self):
        rng = np.random.default_rng(3)
        _, index, unary, q, _ = random_instance(rng, n=4, l=3)
        config = EngineConfig(weights=PairwiseWeights(0.0, 0.0))
        nbrs = resample(index, AnnotationSet(), 0)
        out = mean_field_step(q, unary, nbrs, AnnotationSet(), config)
        expected = np.exp(-unary.data)
        expected /= expected.sum(axis=1, keepdims=True)
        np.testing.assert_allclose(out.data, expected, atol=1e-15)

    def test_two_vertex_diversity_pushes_apart(self):
        # uniform unary, mutual edge with similarity 0.5, shared beliefs
        # (0.8, 0.2): the diversity message must move both vertices toward the
        # minority label
        phi = np.full((2, 2), math.log(2))
        unary = UnaryField(phi, temperature=1.0)
        q = Beliefs(np.array([[0.8, 0.2], [0.8, 0.2]]))
        nbrs = SampledNeighborhoods(
            base_ids=np.array([[1], [0]]),
            base_sims=np.array([[0.5], [0.5]]),
            ann_edges={},
            iteration=0,
        )
        config = EngineConfig(weights=PairwiseWeights(1.0, 0.0))
        out = mean_field_step(q, unary, nbrs, AnnotationSet(), config)
        expected_q0 = 1.0 / (1.0 + math.exp(0.3))  # m0 - m1 = 0.8*0.5 - 0.2*0.5
        np.testing.assert_allclose(out.data[:, 0], expected_q0, atol=1e-12)
        assert out.data[0, 0] == pytest.approx(0.4256, abs=1e-4)
        assert out.data[0, 1] == pytest.approx(0.5744, abs=1e-4)

    def test_annotated_vertex_clamped_one_hot(self):
        rng = np.random.default_rng(5)
        _, index, unary, q, _ = random_instance(rng, n=4, l=3)
        ann = AnnotationSet({2: 1})
        config = EngineConfig(weights=PairwiseWeights(5.0, 5.0))
        out = mean_field_step(q, unary, resample(index, ann, 0), ann, config)
        np.testing.assert_array_equal(out.data[2], [0.0, 1.0, 0.0])

    def test_clamp_off_annotated_still_updates(self):
        rng = np.random.default_rng(6)
        _, index, unary, q, _ = random_instance(rng, n=4, l=3)
        ann = AnnotationSet({2: 1})
        config = EngineConfig(
            weights=PairwiseWeights(0.5, 0.5), clamp_annotations=False
        )
        out = mean_field_step(q, unary, resample(index, ann, 0), ann, config)
        assert out.data[2, 1] != 1.0
        assert out.data[2].sum() == pytest.approx(1.0, abs=1e-9)

    def test_damping_blends_linearly(self):
        rng = np.random.default_rng(7)
        _, index, unary, q, _ = random_instance(rng, n=3, l=2)
        nbrs = resample(index, AnnotationSet(), 0)
        plain = mean_field_step(
            q, unary, nbrs, AnnotationSet(), EngineConfig(weights=PairwiseWeights(0.4, 0.0))
        )
        damped = mean_field_step(
            q,
            unary,
            nbrs,
            AnnotationSet(),
            EngineConfig(weights=PairwiseWeights(0.4, 0.0), damping=0.5),
        )
        np.testing.assert_allclose(
            damped.data, 0.5 * plain.data + 0.5 * q.data, atol=1e-15
        )


class TestRefine:
    def test_zero_pairwise_predictions_equal_zero_shot(self):
        rng = np.random.default_rng(11)
        ds = random_dataset(rng, 20, 4)
        index = build_index(ds.pairwise, k_base=4, k_ann=2, pool_factor=2, seed=1)
        config = EngineConfig(weights=PairwiseWeights(0.0, 0.0), temperature=0.05)
        result = refine(ds, index, config=config, rng_seed=1)
        state = RefinementState(ds, index, config)
        np.testing.assert_array_equal(result.predictions, state.zero_shot_predictions)
        assert result.converged

    def test_tiny_instance_converges_with_damping(self):
        rng = np.random.default_rng(12)
        ds = random_dataset(rng, 2, 2)
        index = build_index(ds.pairwise, k_base=1, k_ann=1, pool_factor=1, seed=0)
        config = EngineConfig(weights=PairwiseWeights(1.0, 0.0), damping=0.5)
        result = refine(ds, index, config=config, rng_seed=0)
        assert result.converged
        assert result.iterations_run <= config.max_iterations
        assert len(result.per_iteration_seconds) == result.iterations_run

    def test_empty_annotations_make_beta_irrelevant(self):
        rng = np.random.default_rng(13)
        ds = random_dataset(rng, 12, 3)
        index = build_index(ds.pairwise, k_base=3, k_ann=2, pool_factor=2, seed=5)
        a = refine(ds, index, config=EngineConfig(weights=PairwiseWeights(0.2, 0.0)), rng_seed=3)
        b = refine(ds, index, config=EngineConfig(weights=PairwiseWeights(0.2, 9.0)), rng_seed=3)
        np.testing.assert_array_equal(a.beliefs.data, b.beliefs.data)

    def test_annotated_predictions_follow_annotation(self):
        rng = np.random.default_rng(14)
        ds = random_dataset(rng, 10, 3)
        index = build_index(ds.pairwise, k_base=3, k_ann=2, pool_factor=2, seed=5)
        ann = AnnotationSet({3: 2, 7: 0})
        result = refine(ds, index, annotations=ann, rng_seed=4)
        assert result.predictions[3] == 2
        assert result.predictions[7] == 0
        np.testing.assert_array_equal(
            result.predictions, np.argmax(result.beliefs.data, axis=1)
        )

    def test_rows_stochastic_after_every_iteration(self):
        rng = np.random.default_rng(15)
        ds = random_dataset(rng, 15, 3)
        index = build_index(ds.pairwise, k_base=4, k_ann=2, pool_factor=3, seed=2)
        state = RefinementState(
            ds, index, EngineConfig(weights=PairwiseWeights(0.5, 0.3), damping=0.2)
        )
        state.annotate(1, 2)
        for _ in range(6):
            state.step(1)
            sums = state.beliefs.data.sum(axis=1)
            assert np.max(np.abs(sums - 1.0)) <= 1e-9
            np.testing.assert_array_equal(state.beliefs.data[1], [0.0, 0.0, 1.0])


class TestAnnotationEffects:
    def test_apply_annotation_overwrites_with_audit(self):
        rng = np.random.default_rng(16)
        ds = random_dataset(rng, 8, 3)
        index = build_index(ds.pairwise, k_base=2, k_ann=2, pool_factor=1, seed=0)
        state = RefinementState(ds, index)
        audit1 = state.annotate(3, 2)
        assert audit1.previous_label is None
        assert state.predictions[3] == 2
        audit2 = state.annotate(3, 1)
        assert audit2.previous_label == 2
        assert state.predictions[3] == 1
        assert state.annotations.entries == {3: 1}

    def test_annotation_out_of_range(self):
        rng = np.random.default_rng(17)
        ds = random_dataset(rng, 8, 3)
        index = build_index(ds.pairwise, k_base=2, k_ann=2, pool_factor=1, seed=0)
        state = RefinementState(ds, index)
        with pytest.raises(ValueError):
            state.annotate(8, 0)
        with pytest.raises(ValueError):
            state.annotate(0, 3)

    def test_beta_weakly_increases_neighbor_belief_in_annotation(self):
        # same seed and fixed neighborhoods: raising beta from 0 must not
        # decrease any similar neighbor's belief in the annotated class
        rng = np.random.default_rng(18)
        ds = random_dataset(rng, 14, 3)
        index = build_index(ds.pairwise, k_base=3, k_ann=3, pool_factor=1, seed=9)
        label = 1
        outputs = {}
        for beta in (0.0, 0.01):
            state = RefinementState(
                ds,
                index,
                EngineConfigWith(beta),
            )
            state.annotate(4, label)
            state.step(1)
            outputs[beta] = state.beliefs.data
        members = index.similar_ids[4][:3]
        for w in members:
            assert outputs[0.01][w, label] >= outputs[0.0][w, label] - 1e-15


def EngineConfigWith(beta):
    return EngineConfig(weights=PairwiseWeights(alpha=0.1, beta=beta))


class TestPermutationEquivariance:
    def test_fixed_neighborhood_runs_commute_with_relabeling(self):
        rng = np.random.default_rng(19)
        n, l = 12, 3
        ds = random_dataset(rng, n, l)
        sigma = rng.permutation(n)  # new vertex i is old vertex sigma[i]
        permuted = Dataset(
            name="perm",
            unary=EmbeddingMatrix(ds.unary.data[sigma]),
            pairwise=EmbeddingMatrix(ds.pairwise.data[sigma]),
            text=ds.text,
            labels=ds.labels[sigma],
        )
        config = EngineConfig(weights=PairwiseWeights(0.6, 0.0), temperature=0.2)
        idx_a = build_index(ds.pairwise, k_base=3, k_ann=2, pool_factor=1, seed=0)
        idx_b = build_index(permuted.pairwise, k_base=3, k_ann=2, pool_factor=1, seed=0)
        ra = refine(ds, idx_a, config=config, rng_seed=0)
        rb = refine(permuted, idx_b, config=config, rng_seed=0)
        np.testing.assert_allclose(rb.beliefs.data, ra.beliefs.data[sigma], atol=1e-12)


class TestEngineConfig:
    def test_round_trips_through_dict(self):
        config = EngineConfig(
            weights=PairwiseWeights(0.3, 0.02),
            max_iterations=7,
            convergence_tol=1e-5,
            damping=0.25,
            clamp_annotations=False,
            temperature=0.5,
            pairwise_term="smoothing",
        )
        assert EngineConfig.from_dict(config.to_dict()) == config

    def test_validation(self):
        with pytest.raises(ValueError):
            EngineConfig(max_iterations=0)
        with pytest.raises(ValueError):
            EngineConfig(damping=1.0)
        with pytest.raises(ValueError):
            EngineConfig(pairwise_term="nope")
