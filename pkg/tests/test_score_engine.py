import itertools
import math

import numpy as np
import pytest

from privsbm.errors import DimensionMismatch, InvalidParameter
from privsbm.graph_model import (
    Graph,
    Labeling,
    SbmParams,
    balanced_array,
    balanced_default,
    enumerate_balanced,
    sample_sbm,
)
from privsbm.graph_space import (
    envelope_members,
    graph_vectors,
    masks_at_distance,
    star_masks,
)
from privsbm.info_quantities import penalty_lambda
from privsbm.rng import stream
from privsbm.score_engine import (
    DegreeEnvelope,
    ScoreContext,
    envelope_exit_frequency,
    in_envelope,
    restricted_sensitivity,
    score,
    score_delta,
    score_from_counts,
    score_matrix,
    split_merge_counts,
    within_edge_count,
    within_pair_count,
)


class TestScore:
    def test_edgeless(self, block_truth):
        ctx = ScoreContext(Graph(4), 0.3)
        assert score(ctx, block_truth) == pytest.approx(-0.6)

    def test_matching(self, matching_graph, block_truth):
        ctx = ScoreContext(matching_graph, 0.3)
        assert score(ctx, block_truth) == pytest.approx(1.4)

    def test_zero_penalty_counts_edges(self, block_truth):
        graph = Graph.from_edges(4, [(0, 1), (1, 2), (2, 3)])
        assert score(ScoreContext(graph, 0.0), block_truth) == 2.0
        assert within_edge_count(graph, block_truth) == 2

    def test_counting_path_agrees(self, small_params):
        truth = balanced_default(small_params)
        for seed in range(10):
            graph = sample_sbm(small_params, truth, seed)
            ctx = ScoreContext.from_params(graph, small_params)
            for sigma in enumerate_balanced(small_params):
                assert score_from_counts(ctx, sigma) == pytest.approx(score(ctx, sigma))

    def test_within_pairs(self):
        assert within_pair_count([2, 2]) == 2
        assert within_pair_count([3, 1, 4]) == 9

    def test_length_mismatch(self, matching_graph):
        with pytest.raises(DimensionMismatch):
            score(ScoreContext(matching_graph, 0.3), Labeling((1, 2), 2))

    def test_params_size_mismatch(self, small_params):
        with pytest.raises(DimensionMismatch):
            ScoreContext.from_params(Graph(5), small_params)

    def test_matrix_matches_scan(self):
        params = SbmParams(6, 3, 2.0, 1.0, 1.25)
        truth = balanced_default(params)
        graphs = [sample_sbm(params, truth, seed) for seed in range(3)]
        support = balanced_array(6, 3, 1.25)
        vectors = np.stack([graph.vector() for graph in graphs])
        scores = score_matrix(support, vectors, 0.2)
        assert scores.shape == (3, len(support))
        for row, graph in zip(scores, graphs):
            ctx = ScoreContext(graph, 0.2)
            for value, labels in zip(row[:50], support[:50]):
                sigma = Labeling.from_array(labels, 3)
                assert value == pytest.approx(score(ctx, sigma))

    def test_constant_on_label_orbit(self):
        params = SbmParams(6, 3, 3.0, 1.0)
        graph = sample_sbm(params, Labeling((1, 1, 2, 2, 3, 3), 3), 2)
        ctx = ScoreContext(graph, 0.3)
        rng = stream(5)
        for _ in range(20):
            labels = rng.integers(1, 4, size=6)
            base = score(ctx, Labeling(tuple(int(x) for x in labels), 3))
            for perm in itertools.permutations((1, 2, 3)):
                relabeled = tuple(perm[int(x) - 1] for x in labels)
                assert score(ctx, Labeling(relabeled, 3)) == pytest.approx(base)


class TestScoreDelta:
    def test_same_label(self, matching_graph, block_truth):
        assert score_delta(ScoreContext(matching_graph, 0.3), block_truth, 2, 2) == 0.0

    def test_single_edge_move(self, block_truth):
        ctx = ScoreContext(Graph.from_edges(4, [(0, 1)]), 0.3)
        moved = Labeling((1, 2, 2, 2), 2)
        expected = score(ctx, moved) - score(ctx, block_truth)
        assert score_delta(ctx, block_truth, 1, 2) == pytest.approx(expected)
        # One within edge lost, within pairs go from 2 to 3.
        assert expected == pytest.approx(-1 - 0.3)

    def test_random_moves_match_recompute(self):
        rng = stream(11)
        graph = Graph.from_vector(7, rng.random(21) < 0.4)
        ctx = ScoreContext(graph, 0.35)
        for _ in range(100):
            sigma = Labeling.from_array(rng.integers(3, size=7), 3)
            vertex, label = int(rng.integers(7)), int(rng.integers(1, 4))
            labels = list(sigma.assignments)
            labels[vertex] = label
            expected = score(ctx, Labeling(tuple(labels), 3)) - score(ctx, sigma)
            assert score_delta(ctx, sigma, vertex, label) == pytest.approx(expected)

    def test_chained_moves_do_not_drift(self):
        rng = stream(21)
        graph = Graph.from_vector(9, rng.random(36) < 0.5)
        ctx = ScoreContext(graph, 0.37)
        labels = [int(x) for x in rng.integers(1, 4, size=9)]
        running = score(ctx, Labeling(tuple(labels), 3))
        for _ in range(2000):
            vertex, label = int(rng.integers(9)), int(rng.integers(1, 4))
            running += score_delta(ctx, Labeling(tuple(labels), 3), vertex, label)
            labels[vertex] = label
        assert abs(running - score(ctx, Labeling(tuple(labels), 3))) <= 1e-9

    def test_label_out_of_range(self, matching_graph, block_truth):
        with pytest.raises(InvalidParameter):
            score_delta(ScoreContext(matching_graph, 0.3), block_truth, 0, 3)


class TestEnvelope:
    def test_edgeless_inside(self):
        assert in_envelope(Graph(6), DegreeEnvelope.create(0.01, 1.0, 6))

    def test_star_outside(self):
        star = Graph.from_edges(10, [(0, v) for v in range(1, 10)])
        assert not in_envelope(star, DegreeEnvelope(1.0, 5.0, 10.0))

    @pytest.mark.parametrize(
        "c, a, n, expected", [(5, 10, math.e**2, 100), (5, 1, math.e**3, 30)]
    )
    def test_sensitivity(self, c, a, n, expected):
        env = DegreeEnvelope.create(c, a, n)
        assert restricted_sensitivity(env) == pytest.approx(expected)

    def test_constant_positive(self):
        with pytest.raises(InvalidParameter):
            DegreeEnvelope.create(0.0, 1.0, 10)

    @pytest.mark.slow
    def test_sbm_rarely_exits(self):
        n = 200
        params = SbmParams(n, 2, 2 * math.log(n), math.log(n))
        truth = balanced_default(params)
        env = DegreeEnvelope.for_params(params, 10.0)
        assert envelope_exit_frequency(params, truth, env, 200, seed=0) <= 0.01


class TestSplitMerge:
    def test_identical(self, block_truth):
        counts = split_merge_counts(block_truth, block_truth, 2)
        assert (counts.alpha, counts.gamma, counts.m) == (0, 0, 0)

    def test_single_move(self, block_truth):
        counts = split_merge_counts(block_truth, Labeling((1, 2, 2, 2), 2), 2)
        assert (counts.alpha, counts.gamma, counts.m) == (1, 2, 1)
        assert counts.alpha + counts.gamma == 1 * 3
        assert counts.minimum == 1

    def test_relabeling_is_free(self, block_truth):
        counts = split_merge_counts(block_truth, Labeling((2, 2, 1, 1), 2), 2)
        assert (counts.alpha, counts.gamma, counts.m) == (0, 0, 0)

    def test_too_many_labels(self, block_truth):
        with pytest.raises(InvalidParameter):
            split_merge_counts(block_truth, Labeling((1, 2, 3, 3), 3), 2)


def _lipschitz_ratio(params, env, masks_by_distance):
    support = balanced_array(params.n, params.k, params.beta)
    scores = score_matrix(support, graph_vectors(params.n), penalty_lambda(params))
    members = envelope_members(params.n, env)
    index = np.arange(len(scores))
    worst = 0.0
    for distance, masks in masks_by_distance:
        for mask in masks:
            partner = index ^ mask
            both = members & members[partner]
            gap = np.abs(scores[both] - scores[partner[both]]).max(initial=0.0)
            worst = max(worst, gap / (restricted_sensitivity(env) * distance))
    return worst


class TestLipschitz:
    @pytest.mark.parametrize(
        "params", [SbmParams(4, 2, 2.0, 1.0), SbmParams(5, 2, 2.0, 1.0, 1.25)]
    )
    def test_every_distance(self, params):
        env = DegreeEnvelope.for_params(params, 1.0)
        distances = [(d, masks_at_distance(params.n, d)) for d in range(1, params.n)]
        ratio = _lipschitz_ratio(params, env, distances)
        assert 0 < ratio <= 1 + 1e-12

    @pytest.mark.slow
    def test_six_vertices_adjacent(self):
        params = SbmParams(6, 3, 2.0, 1.0)
        env = DegreeEnvelope.for_params(params, 1.0)
        ratio = _lipschitz_ratio(params, env, [(1, star_masks(6))])
        assert 0 < ratio <= 1 + 1e-12
