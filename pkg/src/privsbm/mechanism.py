"""Node-private community estimation with the Exponential Mechanism."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_softmax, logsumexp

from .defaults import ANNEAL_ETA, CHAIN_STEPS, ENVELOPE_C, SWAP_PROB
from .errors import EmptySigma, EnumerationTooLarge, InvalidParameter
from .graph_model import (
    Graph,
    Labeling,
    SbmParams,
    balanced_array,
    balanced_default,
    sample_uniform_balanced,
)
from .rng import stream
from .score_engine import (
    DegreeEnvelope,
    ScoreContext,
    in_envelope,
    relabel_delta,
    score_matrix,
)

logger = logging.getLogger(__name__)

SAMPLERS = ("exact", "gumbel", "metropolis")
FALLBACKS = ("uniform_balanced", "reject")


@dataclass(frozen=True, slots=True)
class MechanismConfig:
    """
    Privacy budget, envelope and sampler of the private estimator.

    The mechanism advertises the budget ``epsilon`` and runs the Exponential
    Mechanism at ``epsilon0 = epsilon / 2`` with inverse temperature
    ``eta = epsilon0 / (2·delta_a)``. ``eta_scale`` multiplies ``eta`` and exists to
    miscalibrate the mechanism on purpose; it is 1 in every real run.
    """

    epsilon: float
    envelope: DegreeEnvelope
    sampler: str = "exact"
    chain_steps: int = CHAIN_STEPS
    fallback: str = "uniform_balanced"
    w: float | None = None
    swap_prob: float = SWAP_PROB
    eta_scale: float = 1.0

    def __post_init__(self):
        if not (self.epsilon >= 0 and math.isfinite(self.epsilon)):
            raise InvalidParameter(
                f"epsilon must be finite and >= 0, got {self.epsilon}"
            )
        if self.sampler not in SAMPLERS:
            raise InvalidParameter(f"sampler must be one of {SAMPLERS}")
        if self.fallback not in FALLBACKS:
            raise InvalidParameter(f"fallback must be one of {FALLBACKS}")
        if self.chain_steps < 1:
            raise InvalidParameter(f"chain_steps must be >= 1, got {self.chain_steps}")
        if not 0 <= self.swap_prob <= 1:
            raise InvalidParameter(
                f"swap_prob must lie in [0, 1], got {self.swap_prob}"
            )

    @classmethod
    def create(
        cls, params: SbmParams, epsilon: float, c: float = ENVELOPE_C, **kwargs
    ) -> MechanismConfig:
        """Config with the degree envelope of ``params`` at constant ``c``."""
        return cls(epsilon, DegreeEnvelope.for_params(params, c), **kwargs)

    @property
    def epsilon0(self) -> float:
        """Budget of the restricted-domain mechanism, ε/2."""
        return self.epsilon / 2

    @property
    def eta(self) -> float:
        """Inverse temperature ε₀/(2Δ_a) = ε/(4Δ_a)."""
        return self.eta_scale * self.epsilon / (4 * self.envelope.delta_a)


def em_log_probabilities(scores: np.ndarray, eta: float) -> np.ndarray:
    """Log-probabilities ∝ η·score along the last axis."""
    return log_softmax(eta * np.asarray(scores, dtype=np.float64), axis=-1)


@dataclass(frozen=True)
class EmDistribution:
    """The Exponential Mechanism law over Σ_β for one graph."""

    support: np.ndarray
    """0-based labelings of shape ``(|Σ_β|, n)`` in lexicographic order."""
    log_weights: np.ndarray
    log_partition: float
    k: int
    scores: np.ndarray = field(repr=False)

    @property
    def log_probabilities(self) -> np.ndarray:
        """Normalized log-probabilities."""
        return self.log_weights - self.log_partition

    @property
    def probabilities(self) -> np.ndarray:
        """Normalized probabilities."""
        return np.exp(self.log_probabilities)

    def labelings(self) -> list[Labeling]:
        """The support as labelings."""
        return [Labeling.from_array(row, self.k) for row in self.support]

    def index(self, sigma: Labeling) -> int:
        """Position of ``sigma`` in the support."""
        matches = np.flatnonzero(np.all(self.support == sigma.array, axis=1))
        if matches.size == 0:
            raise InvalidParameter(f"{sigma} is not in the support")
        return int(matches[0])


def _support(params: SbmParams) -> np.ndarray:
    support = balanced_array(params.n, params.k, params.beta)
    if len(support) == 0:
        raise EmptySigma(f"Σ_β is empty for {params}")
    return support


def em_distribution(
    ctx: ScoreContext, cfg: MechanismConfig, params: SbmParams
) -> EmDistribution:
    """Exact Exponential Mechanism law, computed in log space."""
    support = _support(params)
    scores = score_matrix(support, ctx.vector, ctx.lam)
    log_weights = cfg.eta * scores
    return EmDistribution(
        support=support,
        log_weights=log_weights,
        log_partition=float(logsumexp(log_weights)),
        k=params.k,
        scores=scores,
    )


def full_domain_log_probabilities(
    scores: np.ndarray, members: np.ndarray, cfg: MechanismConfig
) -> np.ndarray:
    """
    Log-probabilities of the full-domain mechanism on many graphs.

    Rows of ``scores`` inside the envelope follow the Exponential Mechanism; the
    others follow the fallback. With the ``reject`` fallback a last column holds the
    abstention.
    """
    log_probs = em_log_probabilities(scores, cfg.eta)
    outside = ~np.asarray(members, dtype=bool)
    if cfg.fallback == "uniform_balanced":
        log_probs[outside] = -math.log(scores.shape[-1])
        return log_probs
    abstain = np.where(outside, 0.0, -np.inf)
    log_probs[outside] = -np.inf
    return np.concatenate([log_probs, abstain[:, None]], axis=1)


def _accept(rng: np.random.Generator, eta: float, delta: float) -> bool:
    return eta * delta >= 0 or rng.random() < math.exp(eta * delta)


def metropolis_chain(
    ctx: ScoreContext,
    cfg: MechanismConfig,
    params: SbmParams,
    rng: np.random.Generator,
    steps: int | None = None,
    eta=None,
    start: Labeling | None = None,
) -> np.ndarray:
    """
    Run a Metropolis chain on Σ_β targeting the Exponential Mechanism law.

    Each step proposes, with probability ``cfg.swap_prob``, to exchange the labels of
    two vertices, and otherwise to give a uniformly random vertex a uniformly random
    label. Proposals leaving Σ_β are rejected and both proposals are symmetric.

    Parameters
    ----------
    ctx, cfg, params : ScoreContext, MechanismConfig, SbmParams
        Score, mechanism and model.
    rng : np.random.Generator
        Source of randomness, owned by the chain.
    steps : int | None, default: None
        Number of steps, ``cfg.chain_steps`` if not given.
    eta : float | np.ndarray | None, default: None
        Inverse temperature, constant or one value per step; ``cfg.eta`` if not
        given.
    start : Labeling | None, default: None
        Initial state, the contiguous-block labeling if not given.

    Returns
    -------
    np.ndarray
        The state after every step as 0-based labels, shape ``(steps, n)``.
    """
    steps = cfg.chain_steps if steps is None else steps
    schedule = np.broadcast_to(np.asarray(cfg.eta if eta is None else eta), (steps,))
    labels = np.array((start or balanced_default(params)).array, dtype=np.int64)
    counts = np.bincount(labels, minlength=params.k)
    low, high = params.window
    n, k, lam, adjacency = params.n, params.k, ctx.lam, ctx.adjacency
    states = np.empty((steps, n), dtype=np.int8)
    accepted = 0
    for step in range(steps):
        temperature = float(schedule[step])
        if rng.random() < cfg.swap_prob:
            u, v = rng.integers(n, size=2)
            lu, lv = labels[u], labels[v]
            if lu != lv:
                first = relabel_delta(adjacency, labels, counts, u, lv, lam)
                labels[u] = lv
                counts[lu] -= 1
                counts[lv] += 1
                second = relabel_delta(adjacency, labels, counts, v, lu, lam)
                if _accept(rng, temperature, first + second):
                    labels[v] = lu
                    counts[lv] -= 1
                    counts[lu] += 1
                    accepted += 1
                else:
                    labels[u] = lu
                    counts[lv] -= 1
                    counts[lu] += 1
        else:
            vertex = int(rng.integers(n))
            new = int(rng.integers(k))
            old = labels[vertex]
            if new != old and counts[old] - 1 >= low and counts[new] + 1 <= high:
                delta = relabel_delta(adjacency, labels, counts, vertex, new, lam)
                if _accept(rng, temperature, delta):
                    labels[vertex] = new
                    counts[old] -= 1
                    counts[new] += 1
                    accepted += 1
        states[step] = labels
    logger.debug("metropolis: accepted %d of %d proposals", accepted, steps)
    return states


def _encode(labels: np.ndarray, k: int) -> np.ndarray:
    powers = k ** np.arange(labels.shape[-1] - 1, -1, -1, dtype=np.int64)
    return labels.astype(np.int64) @ powers


def metropolis_tv(
    ctx: ScoreContext,
    cfg: MechanismConfig,
    params: SbmParams,
    rng_seed: int,
    steps: int | None = None,
) -> float:
    """Total variation between the chain's visit frequencies and the exact law."""
    dist = em_distribution(ctx, cfg, params)
    states = metropolis_chain(ctx, cfg, params, stream(rng_seed), steps)
    codes = _encode(dist.support, params.k)
    position = np.searchsorted(codes, _encode(states, params.k))
    visits = np.bincount(position, minlength=len(dist.support)) / len(states)
    return 0.5 * float(np.abs(visits - dist.probabilities).sum())


def sample_em(
    ctx: ScoreContext, cfg: MechanismConfig, params: SbmParams, rng_seed: int
) -> Labeling:
    """Draw one labeling from the Exponential Mechanism with ``cfg.sampler``."""
    rng = stream(rng_seed)
    if cfg.sampler == "metropolis":
        states = metropolis_chain(ctx, cfg, params, rng)
        return Labeling.from_array(states[-1], params.k)
    dist = em_distribution(ctx, cfg, params)
    if cfg.sampler == "gumbel":
        noisy = dist.log_weights + rng.gumbel(size=dist.log_weights.size)
        index = int(np.argmax(noisy))
    else:
        index = int(rng.choice(len(dist.support), p=dist.probabilities))
    return Labeling.from_array(dist.support[index], params.k)


def maximize_score(
    ctx: ScoreContext, params: SbmParams, rng_seed: int = 0
) -> tuple[Labeling, bool]:
    """
    Non-private maximizer of the score over Σ_β.

    Exact, with ties broken towards the lexicographically smallest labeling, when Σ_β
    can be enumerated; otherwise the best state of an annealed Metropolis chain.

    Returns
    -------
    tuple[Labeling, bool]
        The maximizer and whether it is approximate.
    """
    try:
        support = _support(params)
    except EnumerationTooLarge:
        pass
    else:
        scores = score_matrix(support, ctx.vector, ctx.lam)
        return Labeling.from_array(support[int(np.argmax(scores))], params.k), False

    cfg = MechanismConfig(0.0, DegreeEnvelope.create(1.0, params.a, params.n))
    steps = CHAIN_STEPS
    schedule = np.geomspace(1.0, ANNEAL_ETA, steps)
    states = metropolis_chain(ctx, cfg, params, stream(rng_seed), steps, schedule)
    unique = np.unique(states, axis=0)
    scores = score_matrix(unique, ctx.vector, ctx.lam)
    return Labeling.from_array(unique[int(np.argmax(scores))], params.k), True


@dataclass(frozen=True, slots=True)
class EstimatorRecord:
    """Metadata of one run of the private estimator."""

    epsilon: float
    epsilon0: float
    eta: float
    envelope_member: bool
    sampler: str
    n: int
    k: int
    a: float
    b: float
    beta: float
    labeling: Labeling | None
    seed: int
    approximate: bool
    abstained: bool

    def to_json(self) -> dict:
        """JSON-ready mapping."""
        return {
            "epsilon": self.epsilon,
            "epsilon0": self.epsilon0,
            "eta": self.eta,
            "envelope_member": self.envelope_member,
            "sampler": self.sampler,
            "n": self.n,
            "K": self.k,
            "a": self.a,
            "b": self.b,
            "beta": self.beta,
            "labeling": (
                None if self.labeling is None else list(self.labeling.assignments)
            ),
            "seed": self.seed,
            "approximate": self.approximate,
            "abstained": self.abstained,
        }


def run_private_estimator(
    g: Graph, cfg: MechanismConfig, params: SbmParams, rng_seed: int
) -> tuple[Labeling | None, EstimatorRecord]:
    """
    The full-domain private estimator.

    Inside the degree envelope this is the Exponential Mechanism; outside it the
    fallback either draws uniformly from Σ_β or abstains (``None``).
    """
    ctx = ScoreContext.from_params(g, params, cfg.w)
    member = in_envelope(g, cfg.envelope)
    abstained = False
    if member:
        sigma = sample_em(ctx, cfg, params, rng_seed)
    else:
        logger.warning(
            "graph leaves the degree envelope (threshold %g), using %s fallback",
            cfg.envelope.threshold,
            cfg.fallback,
        )
        if cfg.fallback == "uniform_balanced":
            sigma = sample_uniform_balanced(params, stream(rng_seed))
        else:
            sigma, abstained = None, True
    record = EstimatorRecord(
        epsilon=cfg.epsilon,
        epsilon0=cfg.epsilon0,
        eta=cfg.eta,
        envelope_member=member,
        sampler=cfg.sampler,
        n=params.n,
        k=params.k,
        a=params.a,
        b=params.b,
        beta=params.beta,
        labeling=sigma,
        seed=rng_seed,
        approximate=member and cfg.sampler == "metropolis",
        abstained=abstained,
    )
    return sigma, record
