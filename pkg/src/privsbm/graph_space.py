"""Exhaustive enumeration of all graphs on a few vertices.

Graph ``g`` of the space on ``n`` vertices is the graph whose edge bitset is the
integer ``g`` (see :class:`privsbm.graph_model.Graph`), so flipping the pairs of a
difference mask ``d`` maps graph ``g`` to graph ``g ^ d``.
"""

from __future__ import annotations

import logging
from functools import cache

import numpy as np
from scipy.special import xlog1py, xlogy

from .defaults import GRAPH_LAW_N_CAP
from .errors import AuditTooLarge
from .graph_model import (
    Graph,
    Labeling,
    SbmParams,
    edge_probabilities,
    incidence_matrix,
    min_vertex_cover,
    num_pairs,
    pair_endpoints,
)
from .score_engine import DegreeEnvelope

logger = logging.getLogger(__name__)


def _check_size(n: int, cap: int):
    if n > cap:
        raise AuditTooLarge(
            f"n={n} has 2^{num_pairs(n)} graphs, exhaustive enumeration is capped at "
            f"n={cap}"
        )


@cache
def _vectors(n: int) -> np.ndarray:
    pairs = num_pairs(n)
    index = np.arange(1 << pairs, dtype=np.int64)
    vectors = ((index[:, None] >> np.arange(pairs)) & 1).astype(bool)
    vectors.flags.writeable = False
    logger.debug("enumerated %d graphs on %d vertices", len(vectors), n)
    return vectors


def graph_vectors(n: int, cap: int = GRAPH_LAW_N_CAP) -> np.ndarray:
    """Pair vectors of every graph on ``n`` vertices, row ``g`` is graph ``g``."""
    _check_size(n, cap)
    return _vectors(n)


def graph_degrees(n: int, cap: int = GRAPH_LAW_N_CAP) -> np.ndarray:
    """Degree sequence of every graph (shape ``(2^P, n)``)."""
    return graph_vectors(n, cap).astype(np.int64) @ incidence_matrix(n)


def envelope_members(
    n: int, env: DegreeEnvelope, cap: int = GRAPH_LAW_N_CAP
) -> np.ndarray:
    """Boolean mask of the graphs inside the degree envelope."""
    return graph_degrees(n, cap).max(axis=1) <= env.threshold


def sbm_log_law(
    params: SbmParams, truth: Labeling, cap: int = GRAPH_LAW_N_CAP
) -> np.ndarray:
    """Log-probability of every graph under the SBM with ground truth ``truth``."""
    vectors = graph_vectors(params.n, cap)
    probabilities = edge_probabilities(params, truth)
    present = xlogy(vectors, probabilities)
    absent = xlog1py(~vectors, -probabilities)
    return (present + absent).sum(axis=1)


@cache
def _masks_at_distance(n: int, distance: int) -> np.ndarray:
    rows, cols = pair_endpoints(n)
    found = []
    for mask in range(1, 1 << num_pairs(n)):
        edges = [
            (int(rows[bit]), int(cols[bit]))
            for bit in range(num_pairs(n))
            if mask >> bit & 1
        ]
        if min_vertex_cover(edges)[0] == distance:
            found.append(mask)
    masks = np.array(found, dtype=np.int64)
    masks.flags.writeable = False
    return masks


def masks_at_distance(n: int, distance: int, cap: int = GRAPH_LAW_N_CAP) -> np.ndarray:
    """
    Difference masks of node distance exactly ``distance``.

    A mask is a set of pairs; graphs ``g`` and ``g ^ mask`` are at node distance
    equal to the minimum vertex cover of the mask.
    """
    _check_size(n, cap)
    if distance < 1:
        return np.empty(0, dtype=np.int64)
    return _masks_at_distance(n, distance)


def star_masks(n: int) -> np.ndarray:
    """
    Every nonempty set of pairs sharing one vertex.

    These are exactly the masks of node distance one.
    """
    found = set()
    for vertex in range(n):
        star = [
            Graph(n).flip(vertex, other).bits for other in range(n) if other != vertex
        ]
        for subset in range(1, 1 << len(star)):
            mask = 0
            for position, bit in enumerate(star):
                if subset >> position & 1:
                    mask |= bit
            found.add(mask)
    return np.array(sorted(found), dtype=np.int64)


def incident_masks(n: int, u: int, v: int) -> np.ndarray:
    """Every nonempty set of pairs incident to ``u`` or ``v``."""
    incident = [
        Graph(n).flip(i, j).bits
        for i in range(n)
        for j in range(i + 1, n)
        if {i, j} & {u, v}
    ]
    masks = []
    for subset in range(1, 1 << len(incident)):
        mask = 0
        for position, bit in enumerate(incident):
            if subset >> position & 1:
                mask |= bit
        masks.append(mask)
    return np.array(masks, dtype=np.int64)
