"""Graphs, labelings and the homogeneous stochastic block model."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass
from functools import cache, cached_property

import numpy as np
from scipy.optimize import linear_sum_assignment

from .defaults import (
    COVER_EDGE_CAP,
    ENUMERATION_CAP,
    ENUMERATION_CHUNK,
    UNIFORM_REJECTION_TRIES,
)
from .errors import (
    BalanceViolation,
    DimensionMismatch,
    EmptyBalanceWindow,
    EmptySigma,
    EnumerationTooLarge,
    InvalidParameter,
    InvalidProbability,
    ValidationError,
)
from .rng import stream

logger = logging.getLogger(__name__)

FACTORIAL_K_MAX = 6
"""Largest K for which the mismatch ratio enumerates all K! permutations."""


def num_pairs(n: int) -> int:
    """Number of unordered vertex pairs."""
    return n * (n - 1) // 2


def pair_index(i: int, j: int, n: int) -> int:
    """Bit position of the unordered pair {i, j} (0-based, lexicographic)."""
    if i == j:
        raise ValidationError(f"self-loop {{{i}, {j}}} is not a pair")
    if i > j:
        i, j = j, i
    return i * n - i * (i + 1) // 2 + j - i - 1


@cache
def pair_endpoints(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Row and column arrays of all pairs i<j in bit order."""
    rows, cols = np.triu_indices(n, 1)
    rows.flags.writeable = False
    cols.flags.writeable = False
    return rows, cols


@cache
def incidence_matrix(n: int) -> np.ndarray:
    """Pair-by-vertex 0/1 incidence matrix (shape ``(n(n-1)/2, n)``)."""
    rows, cols = pair_endpoints(n)
    incidence = np.zeros((rows.size, n), dtype=np.int64)
    incidence[np.arange(rows.size), rows] = 1
    incidence[np.arange(rows.size), cols] = 1
    incidence.flags.writeable = False
    return incidence


def _vector_to_bits(vector: np.ndarray) -> int:
    packed = np.packbits(np.asarray(vector, dtype=np.uint8), bitorder="little")
    return int.from_bytes(packed.tobytes(), "little")


def _bits_to_vector(bits: int, length: int) -> np.ndarray:
    nbytes = max(1, (length + 7) // 8)
    raw = np.frombuffer(bits.to_bytes(nbytes, "little"), dtype=np.uint8)
    return np.unpackbits(raw, bitorder="little")[:length].astype(bool)


@dataclass(frozen=True, slots=True)
class Graph:
    """
    A simple undirected graph on vertices ``0..n-1``.

    The edge set is an integer bitset over the upper-triangular pairs; bit
    :func:`pair_index` ``(i, j, n)`` is set iff ``{i, j}`` is an edge. Self-loops
    cannot be represented and every edge is stored once.
    """

    n: int
    bits: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ValidationError(f"graph needs at least one vertex, got n={self.n}")
        if self.bits < 0 or self.bits >> num_pairs(self.n):
            raise ValidationError(
                f"bitset {self.bits} has bits beyond the pairs of n={self.n}"
            )

    @classmethod
    def from_edges(cls, n: int, edges) -> Graph:
        """Create a graph from an iterable of 0-based vertex pairs."""
        bits = 0
        for i, j in edges:
            if not (0 <= i < n and 0 <= j < n):
                raise ValidationError(f"edge ({i}, {j}) out of range for n={n}")
            bits |= 1 << pair_index(i, j, n)
        return cls(n, bits)

    @classmethod
    def from_vector(cls, n: int, vector: np.ndarray) -> Graph:
        """Create a graph from a 0/1 vector over pairs in bit order."""
        vector = np.asarray(vector)
        if vector.shape != (num_pairs(n),):
            raise DimensionMismatch(
                f"pair vector has shape {vector.shape}, expected ({num_pairs(n)},)"
            )
        return cls(n, _vector_to_bits(vector != 0))

    @classmethod
    def from_adjacency(cls, adjacency: np.ndarray) -> Graph:
        """Create a graph from a symmetric zero-diagonal 0/1 matrix."""
        adjacency = np.asarray(adjacency)
        n = adjacency.shape[0]
        if adjacency.shape != (n, n):
            raise DimensionMismatch(f"adjacency must be square, got {adjacency.shape}")
        if np.any(np.diagonal(adjacency)) or np.any(adjacency != adjacency.T):
            raise ValidationError("adjacency must be symmetric with zero diagonal")
        rows, cols = pair_endpoints(n)
        return cls.from_vector(n, adjacency[rows, cols])

    @property
    def num_pairs(self) -> int:
        """Number of vertex pairs."""
        return num_pairs(self.n)

    def vector(self) -> np.ndarray:
        """Boolean edge indicator over pairs in bit order."""
        return _bits_to_vector(self.bits, self.num_pairs)

    def adjacency(self) -> np.ndarray:
        """Dense symmetric boolean adjacency matrix."""
        matrix = np.zeros((self.n, self.n), dtype=bool)
        rows, cols = pair_endpoints(self.n)
        vector = self.vector()
        matrix[rows, cols] = vector
        matrix[cols, rows] = vector
        return matrix

    def has_edge(self, i: int, j: int) -> bool:
        """Whether ``{i, j}`` is an edge."""
        return i != j and bool(self.bits >> pair_index(i, j, self.n) & 1)

    def flip(self, i: int, j: int) -> Graph:
        """Return a copy with pair ``{i, j}`` toggled."""
        return Graph(self.n, self.bits ^ (1 << pair_index(i, j, self.n)))

    def edges(self) -> list[tuple[int, int]]:
        """Sorted list of edges ``(i, j)`` with ``i < j``."""
        rows, cols = pair_endpoints(self.n)
        present = np.flatnonzero(self.vector())
        return [(int(rows[k]), int(cols[k])) for k in present]

    @property
    def edge_count(self) -> int:
        """Number of edges."""
        return self.bits.bit_count()

    def degrees(self) -> np.ndarray:
        """Degree of every vertex."""
        return self.vector().astype(np.int64) @ incidence_matrix(self.n)

    def degree(self, i: int) -> int:
        """Degree of vertex ``i``."""
        return int(self.degrees()[i])

    def rewire(self, vertex: int, neighbors) -> Graph:
        """Return a copy whose edges at ``vertex`` are exactly ``neighbors``."""
        bits = self.bits
        for other in range(self.n):
            if other == vertex:
                continue
            bit = 1 << pair_index(vertex, other, self.n)
            bits &= ~bit
            if other in neighbors:
                bits |= bit
        return Graph(self.n, bits)

    def difference_edges(self, other: Graph) -> list[tuple[int, int]]:
        """Edges of the symmetric difference with ``other``."""
        if other.n != self.n:
            raise DimensionMismatch(f"graphs have n={self.n} and n={other.n}")
        return Graph(self.n, self.bits ^ other.bits).edges()


@dataclass(frozen=True)
class Labeling:
    """An assignment of each vertex ``0..n-1`` to a community in ``1..k``."""

    assignments: tuple[int, ...]
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError(f"need at least one community, got k={self.k}")
        object.__setattr__(self, "assignments", tuple(int(x) for x in self.assignments))
        bad = [x for x in self.assignments if not 1 <= x <= self.k]
        if bad:
            raise ValidationError(f"labels {sorted(set(bad))} outside 1..{self.k}")

    @classmethod
    def from_array(cls, labels: np.ndarray, k: int) -> Labeling:
        """Create a labeling from 0-based community indices."""
        return cls(tuple(int(x) + 1 for x in labels), k)

    @property
    def n(self) -> int:
        """Number of vertices."""
        return len(self.assignments)

    @cached_property
    def array(self) -> np.ndarray:
        """0-based community indices as a read-only array."""
        array = np.asarray(self.assignments, dtype=np.int64) - 1
        array.flags.writeable = False
        return array

    def counts(self) -> np.ndarray:
        """Class sizes indexed by community - 1."""
        return np.bincount(self.array, minlength=self.k)

    def __str__(self):
        return " ".join(map(str, self.assignments))


@dataclass(frozen=True, slots=True)
class SbmParams:
    """
    Parameters of the homogeneous SBM class Θ(n, K, a, b, β).

    Within-community pairs are edges with probability ``a / n`` and cross-community
    pairs with probability ``b / n``; ground truths range over β-balanced labelings.
    """

    n: int
    k: int
    a: float
    b: float
    beta: float = 1.0

    def __post_init__(self):
        if self.n < 2:
            raise InvalidParameter(f"n must be at least 2, got {self.n}")
        if self.k < 2:
            raise InvalidParameter(f"K must be at least 2, got {self.k}")
        if not 0 <= self.b <= self.a <= self.n:
            raise InvalidParameter(
                f"need 0 <= b <= a <= n, got a={self.a}, b={self.b}, n={self.n}"
            )
        if self.beta < 1:
            raise InvalidParameter(f"beta must be at least 1, got {self.beta}")
        if self.k >= 3 and self.beta >= math.sqrt(5 / 3):
            raise InvalidParameter(f"K >= 3 needs beta < sqrt(5/3), got {self.beta}")
        low, high = self.window
        if math.ceil(low) > high:
            raise EmptyBalanceWindow(
                f"class-size window [{low:g}, {high:g}] has no integer "
                f"(n={self.n}, K={self.k}, beta={self.beta})"
            )

    @property
    def p(self) -> float:
        """Within-community edge probability a/n."""
        return self.a / self.n

    @property
    def q(self) -> float:
        """Cross-community edge probability b/n."""
        return self.b / self.n

    @property
    def window(self) -> tuple[float, float]:
        """Closed class-size window [n/(βK), βn/K]."""
        return self.n / (self.beta * self.k), self.beta * self.n / self.k


@dataclass(frozen=True, slots=True)
class BalanceCertificate:
    """Class sizes of a labeling against the window of some parameters."""

    class_counts: dict[int, int]
    window: tuple[float, float]

    @property
    def balanced(self) -> bool:
        """Whether every class size lies in the window."""
        low, high = self.window
        return all(low <= count <= high for count in self.class_counts.values())


def _check_length(sigma: Labeling, n: int):
    if sigma.n != n:
        raise DimensionMismatch(f"labeling has {sigma.n} vertices, expected {n}")


def balance_certificate(sigma: Labeling, params: SbmParams) -> BalanceCertificate:
    """Class counts of ``sigma`` with the window of ``params``."""
    _check_length(sigma, params.n)
    counts = np.bincount(sigma.array, minlength=params.k)
    return BalanceCertificate(
        {label + 1: int(count) for label, count in enumerate(counts)}, params.window
    )


def is_balanced(sigma: Labeling, params: SbmParams) -> bool:
    """Whether ``sigma`` belongs to Σ_β (no rounding of the window)."""
    return balance_certificate(sigma, params).balanced


@cache
def _balanced_array(n: int, k: int, beta: float, cap: int) -> np.ndarray:
    total = k**n
    if total > cap:
        raise EnumerationTooLarge(
            f"K^n = {k}^{n} = {total} candidates exceeds the cap {cap}"
        )
    low, high = n / (beta * k), beta * n / k
    powers = k ** np.arange(n - 1, -1, -1, dtype=np.int64)
    kept = []
    for start in range(0, total, ENUMERATION_CHUNK):
        index = np.arange(start, min(start + ENUMERATION_CHUNK, total), dtype=np.int64)
        digits = (index[:, None] // powers) % k
        counts = np.stack([(digits == label).sum(axis=1) for label in range(k)], axis=1)
        mask = np.all((counts >= low) & (counts <= high), axis=1)
        kept.append(digits[mask].astype(np.int8))
    support = np.concatenate(kept) if kept else np.empty((0, n), dtype=np.int8)
    support.flags.writeable = False
    logger.debug(
        "enumerated |Σ_β| = %d for n=%d, K=%d, beta=%g", len(support), n, k, beta
    )
    return support


def balanced_array(
    n: int, k: int, beta: float, cap: int = ENUMERATION_CAP
) -> np.ndarray:
    """
    All β-balanced labelings as a read-only array of 0-based labels.

    Parameters
    ----------
    n, k, beta : int, int, float
        Vertex count, community count and balance factor. These are raw values, so
        windows without integers simply give an empty result.
    cap : int, default: ENUMERATION_CAP
        Largest admissible K^n.

    Returns
    -------
    np.ndarray
        Array of shape ``(|Σ_β|, n)`` in lexicographic order of label sequences.
    """
    return _balanced_array(int(n), int(k), float(beta), int(cap))


def enumerate_balanced(params: SbmParams, cap: int = ENUMERATION_CAP) -> list[Labeling]:
    """Every labeling of Σ_β once, in lexicographic order."""
    support = balanced_array(params.n, params.k, params.beta, cap)
    return [Labeling.from_array(row, params.k) for row in support]


def balanced_default(params: SbmParams) -> Labeling:
    """
    The maximally balanced contiguous-block labeling.

    Class ``c`` holds a contiguous block of ``⌊n/K⌋`` or ``⌈n/K⌉`` vertices, larger
    classes first.
    """
    base, extra = divmod(params.n, params.k)
    sizes = [base + (label < extra) for label in range(params.k)]
    labels = np.repeat(np.arange(params.k), sizes)
    sigma = Labeling.from_array(labels, params.k)
    if not is_balanced(sigma, params):
        raise EmptySigma(f"Σ_β is empty for {params}")
    return sigma


def sample_uniform_balanced(params: SbmParams, rng: np.random.Generator) -> Labeling:
    """Draw uniformly from Σ_β by rejection from [K]^n."""
    low, high = params.window
    for _ in range(UNIFORM_REJECTION_TRIES):
        labels = rng.integers(params.k, size=params.n)
        counts = np.bincount(labels, minlength=params.k)
        if np.all((counts >= low) & (counts <= high)):
            return Labeling.from_array(labels, params.k)
    support = balanced_array(params.n, params.k, params.beta)
    if len(support) == 0:
        raise EmptySigma(f"Σ_β is empty for {params}")
    return Labeling.from_array(support[rng.integers(len(support))], params.k)


def edge_probabilities(params: SbmParams, truth: Labeling) -> np.ndarray:
    """Edge probability of every pair in bit order."""
    p, q = params.p, params.q
    for name, value in (("a/n", p), ("b/n", q)):
        if not 0 <= value <= 1:
            raise InvalidProbability(f"{name} = {value} is not a probability")
    rows, cols = pair_endpoints(params.n)
    labels = truth.array
    return np.where(labels[rows] == labels[cols], p, q)


def sample_sbm(params: SbmParams, truth: Labeling, rng_seed: int) -> Graph:
    """
    Draw a graph from the SBM conditional on ``truth``.

    Every pair is an edge independently, with probability ``a/n`` inside a community
    and ``b/n`` across. The draw is a function of ``rng_seed`` only.
    """
    _check_length(truth, params.n)
    if not is_balanced(truth, params):
        raise BalanceViolation(f"truth {truth} is not {params.beta}-balanced")
    probabilities = edge_probabilities(params, truth)
    rng = stream(rng_seed)
    return Graph.from_vector(params.n, rng.random(probabilities.size) < probabilities)


def hamming_distance(sigma: Labeling, other: Labeling) -> int:
    """Number of vertices with different labels."""
    _check_length(other, sigma.n)
    return int(np.count_nonzero(sigma.array != other.array))


@cache
def _permutations(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def _mismatches(truth: np.ndarray, estimate: np.ndarray, k: int, method: str) -> int:
    if method == "auto":
        method = "factorial" if k <= FACTORIAL_K_MAX else "assignment"
    if method == "factorial":
        relabeled = _permutations(k)[:, estimate]
        return int((relabeled != truth).sum(axis=1).min())
    if method == "assignment":
        confusion = np.zeros((k, k), dtype=np.int64)
        np.add.at(confusion, (truth, estimate), 1)
        rows, cols = linear_sum_assignment(confusion, maximize=True)
        return truth.size - int(confusion[rows, cols].sum())
    raise ValueError(f"unknown method {method!r}")


def mismatch_ratio(
    truth: Labeling, estimate: Labeling, k: int, method: str = "auto"
) -> float:
    """
    Permutation-invariant mismatch ratio r(truth, estimate).

    The minimum over label permutations of the fraction of misclassified vertices.
    ``method`` is ``"factorial"`` (all K! permutations), ``"assignment"`` (maximum
    weight matching of the K×K confusion matrix) or ``"auto"`` (factorial up to
    ``FACTORIAL_K_MAX``).
    """
    _check_length(estimate, truth.n)
    return _mismatches(truth.array, estimate.array, k, method) / truth.n


def orbit_distance(truth: Labeling, sigma: Labeling) -> int:
    """Orbit distance d(σ, σ₀) = min over π of d_H(σ, π∘σ₀)."""
    _check_length(sigma, truth.n)
    k = max(truth.k, sigma.k)
    return _mismatches(truth.array, sigma.array, k, "auto")


def orbit_key(labels) -> tuple[int, ...]:
    """Canonical representative of a label orbit (labels by order of appearance)."""
    if isinstance(labels, Labeling):
        labels = labels.array
    first_seen: dict[int, int] = {}
    return tuple(first_seen.setdefault(int(x), len(first_seen)) for x in labels)


def min_vertex_cover(edges, cap: int = COVER_EDGE_CAP) -> tuple[int, bool]:
    """
    Size of a minimum vertex cover of a simple graph given by its edges.

    Exact branch-and-bound when there are at most ``cap`` edges; otherwise the
    2-approximation from a maximal matching.

    Returns
    -------
    tuple[int, bool]
        Cover size and whether it is exact.
    """
    edges = {frozenset(edge) for edge in edges}
    if len(edges) > cap:
        covered: set[int] = set()
        for edge in sorted(edges, key=sorted):
            if not edge & covered:
                covered |= edge
        return len(covered), False

    best = len({v for edge in edges for v in edge})

    def branch(remaining: frozenset, size: int):
        nonlocal best
        if size >= best:
            return
        if not remaining:
            best = size
            return
        degree: dict[int, int] = {}
        for edge in remaining:
            for v in edge:
                degree[v] = degree.get(v, 0) + 1
        vertex = max(sorted(degree), key=degree.__getitem__)
        neighbors = {w for edge in remaining if vertex in edge for w in edge} - {vertex}
        # Either vertex joins the cover or all its neighbors do.
        branch(frozenset(e for e in remaining if vertex not in e), size + 1)
        rest = frozenset(e for e in remaining if not e & neighbors)
        branch(rest, size + len(neighbors))

    branch(frozenset(edges), 0)
    return best, True


class NodeDistance(int):
    """A node distance that knows whether it is exact or only an upper bound."""

    exact: bool

    def __new__(cls, value: int, exact: bool = True):
        distance = super().__new__(cls, value)
        distance.exact = exact
        return distance

    def __repr__(self) -> str:
        return f"NodeDistance({int(self)}, exact={self.exact})"


def node_distance(g1: Graph, g2: Graph, cap: int = COVER_EDGE_CAP) -> NodeDistance:
    """
    Node distance d_v: fewest vertex-neighborhood rewirings turning g1 into g2.

    Equals the minimum vertex cover of the symmetric difference. Beyond ``cap``
    difference edges the greedy cover is returned with ``exact`` False.
    """
    if g1.n != g2.n:
        raise DimensionMismatch(f"graphs have n={g1.n} and n={g2.n}")
    size, exact = min_vertex_cover(g1.difference_edges(g2), cap)
    if not exact:
        logger.warning(
            "node distance is an upper bound: difference exceeds %d edges", cap
        )
    return NodeDistance(size, exact)


def max_degree(g: Graph) -> int:
    """Largest vertex degree (0 for an edgeless graph)."""
    return int(g.degrees().max(initial=0))
