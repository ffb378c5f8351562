"""Penalized likelihood score, split/merge counts and the degree envelope."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .defaults import ENVELOPE_C
from .errors import DimensionMismatch, InvalidParameter
from .graph_model import (
    Graph,
    Labeling,
    SbmParams,
    max_degree,
    orbit_distance,
    pair_endpoints,
    sample_sbm,
)
from .info_quantities import penalty_lambda
from .rng import child_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreContext:
    """
    A graph together with the penalty λ of its score.

    The score of a labeling σ is ``T(σ) = Σ_{i<j} (A_ij - λ)·1{σ(i) = σ(j)}``.
    """

    graph: Graph
    lam: float

    @classmethod
    def from_params(cls, graph: Graph, params: SbmParams, w: float | None = None):
        """Context with the penalty of ``params``."""
        if graph.n != params.n:
            raise DimensionMismatch(f"graph has n={graph.n}, params have n={params.n}")
        return cls(graph, penalty_lambda(params, w))

    @property
    def n(self) -> int:
        """Number of vertices."""
        return self.graph.n

    @cached_property
    def vector(self) -> np.ndarray:
        """Edge indicator over pairs in bit order."""
        vector = self.graph.vector()
        vector.flags.writeable = False
        return vector

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Dense 0/1 adjacency matrix (int64)."""
        adjacency = self.graph.adjacency().astype(np.int64)
        adjacency.flags.writeable = False
        return adjacency


def _check(ctx: ScoreContext, sigma: Labeling):
    if sigma.n != ctx.n:
        raise DimensionMismatch(f"labeling has {sigma.n} vertices, graph has {ctx.n}")


def within_indicator(labels: np.ndarray) -> np.ndarray:
    """
    Same-community indicator over pairs in bit order.

    ``labels`` is one labeling of shape ``(n,)`` or a stack of shape ``(N, n)``.
    """
    labels = np.asarray(labels)
    rows, cols = pair_endpoints(labels.shape[-1])
    return labels[..., rows] == labels[..., cols]


def score(ctx: ScoreContext, sigma: Labeling) -> float:
    """Score T(σ) by a scan over all unordered pairs."""
    _check(ctx, sigma)
    within = within_indicator(sigma.array)
    return float(np.sum(ctx.vector[within].astype(np.float64) - ctx.lam))


def within_edge_count(graph: Graph, sigma: Labeling) -> int:
    """Edges whose endpoints share a community."""
    if sigma.n != graph.n:
        raise DimensionMismatch(f"labeling has {sigma.n} vertices, graph has {graph.n}")
    labels = sigma.array
    same = labels[:, None] == labels[None, :]
    return int(graph.adjacency()[same].sum()) // 2


def within_pair_count(counts) -> int:
    """Pairs inside communities, Σ_c n_c(n_c - 1)/2, from class sizes."""
    return sum(int(c) * (int(c) - 1) // 2 for c in counts)


def score_from_counts(ctx: ScoreContext, sigma: Labeling) -> float:
    """Score as within-edge count minus λ times within-pair count."""
    _check(ctx, sigma)
    edges = within_edge_count(ctx.graph, sigma)
    return edges - ctx.lam * within_pair_count(sigma.counts())


def relabel_delta(
    adjacency: np.ndarray,
    labels: np.ndarray,
    counts: np.ndarray,
    vertex: int,
    new: int,
    lam: float,
) -> float:
    """
    Score change of moving ``vertex`` to the 0-based class ``new``.

    ``labels`` and ``counts`` are the 0-based labels and class sizes before the
    move.
    """
    old = labels[vertex]
    if new == old:
        return 0.0
    row = adjacency[vertex]
    gained = int(row[labels == new].sum()) - lam * int(counts[new])
    lost = int(row[labels == old].sum()) - lam * (int(counts[old]) - 1)
    return gained - lost


def score_delta(
    ctx: ScoreContext, sigma: Labeling, vertex: int, new_label: int
) -> float:
    """T(σ with ``vertex`` relabeled to ``new_label``) - T(σ)."""
    _check(ctx, sigma)
    if not 1 <= new_label <= sigma.k:
        raise InvalidParameter(f"label {new_label} outside 1..{sigma.k}")
    return relabel_delta(
        ctx.adjacency, sigma.array, sigma.counts(), vertex, new_label - 1, ctx.lam
    )


def score_matrix(support: np.ndarray, vectors: np.ndarray, lam: float) -> np.ndarray:
    """
    Scores of every labeling in ``support`` on one or many graphs.

    Parameters
    ----------
    support : np.ndarray
        Labelings of shape ``(N, n)``.
    vectors : np.ndarray
        Pair vectors of shape ``(P,)`` or ``(G, P)``.
    lam : float
        Penalty.

    Returns
    -------
    np.ndarray
        Scores of shape ``(N,)`` or ``(G, N)``.
    """
    within = within_indicator(support).astype(np.float64)
    edges = np.asarray(vectors, dtype=np.float64) @ within.T
    return edges - lam * within.sum(axis=1)


@dataclass(frozen=True, slots=True)
class DegreeEnvelope:
    """
    The graphs with maximum degree at most ``threshold = C·max{a, log n}``.

    On the envelope the score is ``delta_a = 2·threshold`` Lipschitz in node
    distance.
    """

    c: float
    threshold: float
    delta_a: float

    @classmethod
    def create(cls, c: float, a: float, n: float) -> DegreeEnvelope:
        """Envelope with constant ``c`` for degree parameter ``a`` on ``n`` vertices."""
        if not c > 0:
            raise InvalidParameter(f"envelope constant C must be positive, got {c}")
        threshold = c * max(a, math.log(n))
        return cls(c, threshold, 2 * threshold)

    @classmethod
    def for_params(cls, params: SbmParams, c: float = ENVELOPE_C) -> DegreeEnvelope:
        """Envelope of ``params``."""
        return cls.create(c, params.a, params.n)


def in_envelope(g: Graph, env: DegreeEnvelope) -> bool:
    """Whether the maximum degree of ``g`` is within the envelope threshold."""
    return max_degree(g) <= env.threshold


def restricted_sensitivity(env: DegreeEnvelope) -> float:
    """Δ_a = 2·C·max{a, log n}."""
    return env.delta_a


def envelope_exit_frequency(
    params: SbmParams,
    truth: Labeling,
    env: DegreeEnvelope,
    replicates: int,
    seed: int,
) -> float:
    """Monte Carlo fraction of SBM graphs that fall outside the envelope."""
    exits = sum(
        not in_envelope(sample_sbm(params, truth, child_seed(seed, r)), env)
        for r in range(replicates)
    )
    logger.debug("envelope exits: %d of %d", exits, replicates)
    return exits / replicates


@dataclass(frozen=True, slots=True)
class SplitMergeCounts:
    """
    Pairs whose community relation differs between a labeling and the truth.

    ``alpha`` counts truth-within pairs the labeling separates (splits), ``gamma``
    truth-across pairs it joins (merges) and ``m`` is the orbit distance.
    """

    alpha: int
    gamma: int
    m: int

    @property
    def minimum(self) -> int:
        """α ∧ γ."""
        return min(self.alpha, self.gamma)


def split_merge_counts(truth: Labeling, sigma: Labeling, k: int) -> SplitMergeCounts:
    """Exact split and merge counts by pair scan."""
    if truth.n != sigma.n:
        raise DimensionMismatch(f"labelings have {truth.n} and {sigma.n} vertices")
    if max(truth.k, sigma.k) > k:
        raise InvalidParameter(f"labelings use more than K={k} communities")
    before = within_indicator(truth.array)
    after = within_indicator(sigma.array)
    return SplitMergeCounts(
        alpha=int(np.count_nonzero(before & ~after)),
        gamma=int(np.count_nonzero(~before & after)),
        m=orbit_distance(truth, sigma),
    )
