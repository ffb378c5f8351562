import numpy as np
import pytest

from privsbm.errors import AuditTooLarge
from privsbm.graph_model import Graph, SbmParams, node_distance, sample_sbm
from privsbm.graph_space import (
    envelope_members,
    graph_degrees,
    graph_vectors,
    incident_masks,
    masks_at_distance,
    sbm_log_law,
    star_masks,
)
from privsbm.score_engine import DegreeEnvelope


class TestGraphVectors:
    def test_row_is_bitset(self):
        vectors = graph_vectors(4)
        assert vectors.shape == (64, 6)
        for g in (0, 5, 33, 63):
            assert np.array_equal(vectors[g], Graph(4, g).vector())

    def test_degrees(self):
        degrees = graph_degrees(4)
        assert np.array_equal(degrees[63], [3, 3, 3, 3])
        assert degrees[0].sum() == 0

    def test_cap(self):
        with pytest.raises(AuditTooLarge):
            graph_vectors(7)

    def test_envelope_members(self):
        env = DegreeEnvelope(1.0, 1.0, 2.0)
        members = envelope_members(4, env)
        # Graphs with maximum degree at most one are the matchings.
        assert members.sum() == 10


class TestLaw:
    def test_normalized(self, small_params, block_truth):
        law = np.exp(sbm_log_law(small_params, block_truth))
        assert law.sum() == pytest.approx(1.0)

    def test_degenerate(self, block_truth):
        params = SbmParams(4, 2, 4.0, 0.0)
        law = np.exp(sbm_log_law(params, block_truth))
        assert law.max() == pytest.approx(1.0)
        assert int(np.argmax(law)) == Graph.from_edges(4, [(0, 1), (2, 3)]).bits

    @pytest.mark.slow
    def test_matches_sampling(self, small_params, block_truth):
        law = np.exp(sbm_log_law(small_params, block_truth))
        draws = np.array(
            [sample_sbm(small_params, block_truth, seed).bits for seed in range(20_000)]
        )
        frequency = np.bincount(draws, minlength=64) / len(draws)
        assert 0.5 * np.abs(frequency - law).sum() < 0.04


class TestMasks:
    def test_stars_are_distance_one(self):
        masks = star_masks(4)
        assert len(masks) == len(set(masks.tolist()))
        assert np.array_equal(np.sort(masks), masks_at_distance(4, 1))

    @pytest.mark.parametrize("distance", [1, 2, 3])
    def test_distance_is_node_distance(self, distance):
        for mask in masks_at_distance(4, distance)[:40]:
            assert node_distance(Graph(4), Graph(4, int(mask))) == distance

    def test_partition_of_masks(self):
        total = sum(len(masks_at_distance(4, d)) for d in range(1, 4))
        assert total == 63
        assert len(masks_at_distance(4, 0)) == 0

    def test_incident(self):
        masks = incident_masks(4, 0, 1)
        assert len(masks) == 2**5 - 1
        for mask in masks:
            edges = Graph(4, int(mask)).edges()
            assert all({0, 1} & set(edge) for edge in edges)
