"""Exact and Monte Carlo audits of the estimator's privacy guarantees."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .defaults import AUDIT_N_CAP, ENVELOPE_C, GROUP_AUDIT_N_CAP, PRIVACY_TOL
from .errors import AuditTooLarge, InvalidParameter, TooFewPerClass
from .graph_model import (
    Graph,
    Labeling,
    SbmParams,
    balanced_array,
    balanced_default,
    edge_probabilities,
    orbit_key,
)
from .graph_space import (
    envelope_members,
    graph_vectors,
    incident_masks,
    masks_at_distance,
    sbm_log_law,
    star_masks,
)
from .info_quantities import penalty_lambda
from .mechanism import (
    MechanismConfig,
    em_log_probabilities,
    full_domain_log_probabilities,
    run_private_estimator,
)
from .rng import child_seed, stream
from .score_engine import score_matrix
from .stats import wilson_interval

logger = logging.getLogger(__name__)

DOMAINS = ("envelope", "full")


@dataclass(frozen=True, slots=True)
class AuditReport:
    """Worst-case log-probability ratio over pairs of graphs at a node distance."""

    max_log_ratio: float
    attained_at: tuple[Graph, Graph, Labeling | None] | None
    """Graphs A, A' and the output realizing the worst ratio (``None`` = abstain)."""
    epsilon_claimed: float
    passed: bool
    pairs_checked: int
    distance: int
    domain: str

    def to_json(self) -> dict:
        """JSON-ready mapping."""
        attained = None
        if self.attained_at is not None:
            g1, g2, sigma = self.attained_at
            attained = {"graph": g1, "neighbor": g2, "output": sigma}
        return {
            "max_log_ratio": self.max_log_ratio,
            "attained_at": attained,
            "epsilon_claimed": self.epsilon_claimed,
            "pass": self.passed,
            "pairs_checked": self.pairs_checked,
            "distance": self.distance,
            "domain": self.domain,
        }


def group_privacy_factor(log_probs_a: np.ndarray, log_probs_b: np.ndarray) -> float:
    """
    Largest absolute log-probability gap between two output laws.

    Outputs impossible under both laws are skipped; an output possible under only
    one gives ``inf``.
    """
    a = np.asarray(log_probs_a, dtype=np.float64)
    b = np.asarray(log_probs_b, dtype=np.float64)
    both_impossible = np.isneginf(a) & np.isneginf(b)
    with np.errstate(invalid="ignore"):
        gap = np.abs(np.where(both_impossible, 0.0, a - b))
    return float(gap.max(initial=0.0))


@dataclass(frozen=True)
class _GraphSpaceLaw:
    log_probs: np.ndarray
    valid: np.ndarray
    support: np.ndarray
    claim: float


def _space_law(
    params: SbmParams, cfg: MechanismConfig, domain: str, n_cap: int
) -> _GraphSpaceLaw:
    if domain not in DOMAINS:
        raise InvalidParameter(f"domain must be one of {DOMAINS}, got {domain!r}")
    if params.n > n_cap:
        raise AuditTooLarge(f"n={params.n} exceeds the audit cap {n_cap}")
    support = balanced_array(params.n, params.k, params.beta)
    vectors = graph_vectors(params.n, n_cap)
    scores = score_matrix(support, vectors, penalty_lambda(params, cfg.w))
    members = envelope_members(params.n, cfg.envelope, n_cap)
    if domain == "envelope":
        log_probs = em_log_probabilities(scores, cfg.eta)
        return _GraphSpaceLaw(log_probs, members, support, cfg.epsilon0)
    log_probs = full_domain_log_probabilities(scores, members, cfg)
    return _GraphSpaceLaw(log_probs, np.ones_like(members), support, cfg.epsilon)


def _worst_ratio(law: _GraphSpaceLaw, masks: np.ndarray):
    graphs = np.arange(len(law.log_probs))
    worst, where, checked = 0.0, None, 0
    for mask in masks:
        partner = graphs ^ int(mask)
        both = law.valid & law.valid[partner]
        checked += int(both.sum())
        if not both.any():
            continue
        here = law.log_probs[both]
        there = law.log_probs[partner[both]]
        impossible = np.isneginf(here) & np.isneginf(there)
        with np.errstate(invalid="ignore"):
            gap = np.where(impossible, 0.0, here - there)
        flat = int(np.argmax(gap))
        row, output = divmod(flat, gap.shape[1])
        if gap[row, output] > worst:
            g = int(graphs[both][row])
            worst, where = float(gap[row, output]), (g, g ^ int(mask), output)
    return worst, where, checked


def _report(law, params, worst, where, checked, distance, domain) -> AuditReport:
    attained = None
    if where is not None:
        g, h, output = where
        sigma = None
        if output < len(law.support):
            sigma = Labeling.from_array(law.support[output], params.k)
        attained = (Graph(params.n, g), Graph(params.n, h), sigma)
    claim = law.claim * distance
    report = AuditReport(
        max_log_ratio=worst,
        attained_at=attained,
        epsilon_claimed=law.claim,
        passed=bool(worst <= claim + PRIVACY_TOL),
        pairs_checked=checked,
        distance=distance,
        domain=domain,
    )
    logger.info(
        "%s audit at distance %d: max log ratio %g vs %g (%s)",
        domain,
        distance,
        worst,
        claim,
        "pass" if report.passed else "FAIL",
    )
    return report


def audit_restricted_dp(
    params: SbmParams,
    cfg: MechanismConfig,
    n_cap: int = AUDIT_N_CAP,
    domain: str = "envelope",
) -> AuditReport:
    """
    Exhaustive audit over all node-adjacent graph pairs.

    Every ordered pair ``(A, A')`` at node distance one and every output are
    checked. In the ``envelope`` domain both graphs lie in the degree envelope and
    the claim is ε₀; in the ``full`` domain the fallback is included and the claim
    is ε.
    """
    law = _space_law(params, cfg, domain, n_cap)
    worst, where, checked = _worst_ratio(law, star_masks(params.n))
    return _report(law, params, worst, where, checked, 1, domain)


def audit_group_privacy(
    params: SbmParams,
    cfg: MechanismConfig,
    distance: int,
    domain: str = "envelope",
    n_cap: int = GROUP_AUDIT_N_CAP,
) -> AuditReport:
    """Exhaustive audit over all graph pairs at node distance exactly ``distance``."""
    if distance < 1:
        raise InvalidParameter(f"distance must be >= 1, got {distance}")
    law = _space_law(params, cfg, domain, n_cap)
    worst, where, checked = _worst_ratio(law, masks_at_distance(params.n, distance))
    return _report(law, params, worst, where, checked, distance, domain)


@dataclass(frozen=True, slots=True)
class TwoPointInstance:
    """A balanced labeling and its copy with the labels of ``u`` and ``v`` swapped."""

    sigma: Labeling
    sigma_prime: Labeling
    u: int
    v: int
    coupled_seed: int


def two_point_instance(
    params: SbmParams, sigma: Labeling | None = None, coupled_seed: int = 0
) -> TwoPointInstance:
    """
    Swap construction on ``sigma`` (the contiguous-block labeling by default).

    ``u`` and ``v`` are the lowest-index vertices of communities 1 and 2.
    """
    if params.n / (params.beta * params.k) < 2:
        raise TooFewPerClass(
            f"n/(beta K) = {params.n / (params.beta * params.k):g} < 2 for {params}"
        )
    sigma = sigma or balanced_default(params)
    counts = sigma.counts()
    if counts.min() < 2:
        raise TooFewPerClass(f"{sigma} has a class with fewer than two vertices")
    labels = np.array(sigma.array)
    u = int(np.flatnonzero(labels == 0)[0])
    v = int(np.flatnonzero(labels == 1)[0])
    labels[u], labels[v] = labels[v], labels[u]
    return TwoPointInstance(
        sigma, Labeling.from_array(labels, params.k), u, v, coupled_seed
    )


def orbits_disjoint(sigma: Labeling, sigma_prime: Labeling, k: int) -> bool:
    """Whether no relabeling of ``sigma_prime`` equals ``sigma``."""
    target = sigma.array
    return not any(
        np.array_equal(np.asarray(perm)[sigma_prime.array], target)
        for perm in itertools.permutations(range(k))
    )


def coupled_pair(
    instance: TwoPointInstance, params: SbmParams, rng: np.random.Generator
) -> tuple[Graph, Graph]:
    """
    One draw of the coupling of SBM(σ) and SBM(σ').

    Both graphs threshold the same uniforms, so they agree on every pair away from
    ``u`` and ``v`` and are at node distance at most two.
    """
    uniforms = rng.random(params.n * (params.n - 1) // 2)
    first = uniforms < edge_probabilities(params, instance.sigma)
    second = uniforms < edge_probabilities(params, instance.sigma_prime)
    return Graph.from_vector(params.n, first), Graph.from_vector(params.n, second)


def coupling_log_ratio(
    params: SbmParams,
    cfg: MechanismConfig,
    instance: TwoPointInstance,
    domain: str = "full",
    n_cap: int = AUDIT_N_CAP,
) -> float:
    """Worst log ratio over graph pairs differing only at pairs touching u or v."""
    law = _space_law(params, cfg, domain, n_cap)
    worst, _, _ = _worst_ratio(law, incident_masks(params.n, instance.u, instance.v))
    return worst


def failure_floor(epsilon: float) -> float:
    """Exact-recovery failure floor 1/(1 + e^{2ε})."""
    return float(expit(-2 * epsilon))


def mismatch_floor(n: int, epsilon: float) -> float:
    """Expected-mismatch floor 1/(n(1 + e^{2ε}))."""
    return failure_floor(epsilon) / n


def min_epsilon_for_failure(n: int, c: float) -> float:
    """Smallest ε compatible with exact-recovery failure at most n^{-c}."""
    target = n**c - 1
    return 0.5 * math.log(target) if target > 1 else 0.0


def min_epsilon_for_mismatch(n: int, c: float) -> float:
    """Smallest ε compatible with expected mismatch at most n^{-(1+c)}."""
    return min_epsilon_for_failure(n, c)


def risk_floor_check(
    mismatch: float, n: int, epsilon: float, c: float = 1.0
) -> tuple[bool, float]:
    """
    Compare a measured expected mismatch with its floor.

    Returns
    -------
    tuple[bool, float]
        Whether ``mismatch`` is at least the floor (up to tolerance), and the
        smallest ε compatible with exact-recovery failure ``n^{-c}``.
    """
    if not 0 <= mismatch <= 1:
        raise InvalidParameter(f"mismatch must lie in [0, 1], got {mismatch}")
    holds = mismatch >= mismatch_floor(n, epsilon) - PRIVACY_TOL
    return holds, min_epsilon_for_failure(n, c)


@dataclass(frozen=True, slots=True)
class TwoPointResult:
    """Exact-recovery failures on the two swapped labelings against the floor."""

    failure_sigma: float
    failure_sigma_prime: float
    epsilon_audited: float
    floor: float
    mode: str
    replicates: int
    ci_sigma: tuple[float, float] | None
    ci_sigma_prime: tuple[float, float] | None

    @property
    def failure(self) -> float:
        """max{δ_σ, δ_σ'}."""
        return max(self.failure_sigma, self.failure_sigma_prime)

    @property
    def passed(self) -> bool:
        """Whether the failure reaches the floor (upper CI bound in Monte Carlo)."""
        if self.mode == "monte_carlo":
            upper = max(self.ci_sigma[1], self.ci_sigma_prime[1])
            return upper >= self.floor - PRIVACY_TOL
        return self.failure >= self.floor - PRIVACY_TOL

    def to_json(self) -> dict:
        """JSON-ready mapping."""
        return {
            "failure_sigma": self.failure_sigma,
            "failure_sigma_prime": self.failure_sigma_prime,
            "failure": self.failure,
            "epsilon_audited": self.epsilon_audited,
            "floor": self.floor,
            "mode": self.mode,
            "replicates": self.replicates,
            "ci_sigma": self.ci_sigma,
            "ci_sigma_prime": self.ci_sigma_prime,
            "pass": self.passed,
        }


def _orbit_mask(support: np.ndarray, sigma: Labeling) -> np.ndarray:
    key = orbit_key(sigma)
    return np.array([orbit_key(row) == key for row in support])


def _exact_failures(params, cfg, instance, n_cap) -> tuple[float, float]:
    law = _space_law(params, cfg, "full", n_cap)
    probabilities = np.exp(law.log_probs)
    failures = []
    for truth in (instance.sigma, instance.sigma_prime):
        hits = probabilities[:, : len(law.support)][:, _orbit_mask(law.support, truth)]
        success = np.exp(sbm_log_law(params, truth, n_cap)) @ hits.sum(axis=1)
        failures.append(float(np.clip(1 - success, 0.0, 1.0)))
    return failures[0], failures[1]


def _monte_carlo_failures(params, cfg, instance, replicates):
    misses = [0, 0]
    for r in range(replicates):
        pair = coupled_pair(instance, params, stream(instance.coupled_seed, r))
        for side, (graph, truth) in enumerate(
            zip(pair, (instance.sigma, instance.sigma_prime))
        ):
            seed = child_seed(instance.coupled_seed, r, side)
            estimate, _ = run_private_estimator(graph, cfg, params, seed)
            if estimate is None or orbit_key(estimate) != orbit_key(truth):
                misses[side] += 1
    return misses


def two_point_experiment(
    params: SbmParams,
    cfg: MechanismConfig,
    mode: str = "exact",
    replicates: int = 1000,
    instance: TwoPointInstance | None = None,
    n_cap: int = AUDIT_N_CAP,
) -> TwoPointResult:
    """
    Two-point lower-bound experiment.

    The floor uses the audited privacy level: half the worst log ratio of the
    full-domain mechanism over graph pairs that differ only at pairs touching
    ``u`` or ``v``. Exact mode sums mechanism probabilities over the label orbits
    against the exact SBM graph law; Monte Carlo mode runs the estimator on coupled
    graph pairs and reports Wilson intervals.
    """
    if mode not in ("exact", "monte_carlo"):
        raise InvalidParameter(f"mode must be 'exact' or 'monte_carlo', got {mode!r}")
    instance = instance or two_point_instance(params)
    epsilon_audited = coupling_log_ratio(params, cfg, instance, n_cap=n_cap) / 2
    floor = failure_floor(epsilon_audited)
    if mode == "exact":
        first, second = _exact_failures(params, cfg, instance, n_cap)
        result = TwoPointResult(
            first, second, epsilon_audited, floor, mode, 0, None, None
        )
    else:
        misses = _monte_carlo_failures(params, cfg, instance, replicates)
        result = TwoPointResult(
            misses[0] / replicates,
            misses[1] / replicates,
            epsilon_audited,
            floor,
            mode,
            replicates,
            wilson_interval(misses[0], replicates),
            wilson_interval(misses[1], replicates),
        )
    logger.info(
        "two-point %s: failure %g vs floor %g (audited epsilon %g)",
        mode,
        result.failure,
        floor,
        epsilon_audited,
    )
    return result


def lower_bound_over_class(
    params_list,
    epsilon: float,
    c: float = ENVELOPE_C,
    mode: str = "exact",
    replicates: int = 1000,
    **cfg_kwargs,
) -> list[TwoPointResult]:
    """Two-point experiment on each parameter set of a class (several (a, b))."""
    return [
        two_point_experiment(
            params,
            MechanismConfig.create(params, epsilon, c, **cfg_kwargs),
            mode,
            replicates,
        )
        for params in params_list
    ]
