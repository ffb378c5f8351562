"""Brute-force checks of the inequalities behind the risk bounds."""

from __future__ import annotations

import itertools
import logging
import math
import xml.etree.ElementTree as ET
from collections import Counter
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import binom

from .defaults import C0, C1, LEMMA_TOL, PEELING_UNDERFLOW, TAIL_PAIR_CAP
from .errors import EmptySigma, InvalidParameter, TooManyPairs, ValidationError
from .formats import write_csv
from .graph_model import (
    Labeling,
    SbmParams,
    balanced_array,
    balanced_default,
    orbit_key,
    sample_sbm,
)
from .graph_space import graph_vectors, sbm_log_law
from .info_quantities import chernoff_tilt, penalty_lambda, renyi_half
from .mechanism import MechanismConfig, em_distribution
from .rng import child_seed
from .score_engine import (
    ScoreContext,
    SplitMergeCounts,
    score_matrix,
    split_merge_counts,
    within_indicator,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class LemmaCheck:
    """One inequality ``lhs <= rhs`` (or equality within tolerance) on one instance."""

    lemma: str
    instance: str
    lhs: float
    rhs: float
    passed: bool

    @property
    def margin(self) -> float:
        """rhs - lhs."""
        return self.rhs - self.lhs


@dataclass(frozen=True, slots=True)
class TailBoundCheck:
    """Exact tail probability of a score comparison against its Chernoff bound."""

    lhs: float
    rhs: float
    slack_s: float
    counts: SplitMergeCounts
    passed: bool


def _tail_threshold(params, counts, s, lam) -> float:
    lam = penalty_lambda(params) if lam is None else lam
    return lam * (counts.gamma - counts.alpha) - s - LEMMA_TOL


def exact_tail_probability(
    params: SbmParams,
    truth: Labeling,
    sigma: Labeling,
    s: float,
    lam: float | None = None,
) -> float:
    """
    Exact P(T(σ) ≥ T(σ₀) - s) under the SBM with ground truth σ₀ = ``truth``.

    The score difference is distributed as ``ΣX - ΣY - λ(γ - α)`` with γ draws
    X ~ Ber(b/n) and α draws Y ~ Ber(a/n). Outcome vectors are summed in groups of
    equal counts, with binomial weights. ``lam`` overrides the penalty of
    ``params``.
    """
    if s == math.inf:
        return 1.0
    counts = split_merge_counts(truth, sigma, params.k)
    if counts.alpha + counts.gamma > TAIL_PAIR_CAP:
        raise TooManyPairs(
            f"alpha + gamma = {counts.alpha + counts.gamma} exceeds {TAIL_PAIR_CAP}"
        )
    threshold = _tail_threshold(params, counts, s, lam)
    merges = np.arange(counts.gamma + 1)
    splits = np.arange(counts.alpha + 1)
    weights = np.outer(
        binom.pmf(merges, counts.gamma, params.q),
        binom.pmf(splits, counts.alpha, params.p),
    )
    event = merges[:, None] - splits[None, :] >= threshold
    return float(weights[event].sum())


def graph_tail_probability(
    params: SbmParams,
    truth: Labeling,
    sigma: Labeling,
    s: float,
    lam: float | None = None,
) -> float:
    """The same tail probability by summing the SBM law over every graph."""
    counts = split_merge_counts(truth, sigma, params.k)
    threshold = _tail_threshold(params, counts, s, lam)
    difference = within_indicator(sigma.array).astype(np.int64) - within_indicator(
        truth.array
    ).astype(np.int64)
    edges = graph_vectors(params.n).astype(np.int64) @ difference
    law = np.exp(sbm_log_law(params, truth))
    return float(law[edges >= threshold].sum())


def chernoff_bound_check(
    params: SbmParams,
    truth: Labeling,
    sigma: Labeling,
    s_grid,
    lam: float | None = None,
) -> list[TailBoundCheck]:
    """Exact tail against exp{-I(α ∧ γ) + t*·s} for each slack ``s``."""
    renyi = renyi_half(params)
    tilt = chernoff_tilt(params)
    counts = split_merge_counts(truth, sigma, params.k)
    checks = []
    for s in s_grid:
        lhs = exact_tail_probability(params, truth, sigma, s, lam)
        rhs = math.exp(-renyi * counts.minimum + tilt * s)
        checks.append(TailBoundCheck(lhs, rhs, s, counts, lhs <= rhs + LEMMA_TOL))
    return checks


def _permutations(k: int) -> np.ndarray:
    return np.array(list(itertools.permutations(range(k))), dtype=np.int64)


def split_merge_table(
    support: np.ndarray, truth: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Split counts, merge counts and orbit distances of every row of ``support``.

    Vectorized counterpart of :func:`split_merge_counts` against one truth.
    """
    before = within_indicator(truth)
    after = within_indicator(support)
    alpha = np.count_nonzero(before & ~after, axis=1)
    gamma = np.count_nonzero(~before & after, axis=1)
    relabeled = _permutations(k)[:, support]
    m = (relabeled != truth).sum(axis=2).min(axis=0)
    return alpha, gamma, m


def _truths(support: np.ndarray) -> Iterator[np.ndarray]:
    # Split and merge counts depend on the truth only through its orbit.
    seen = set()
    for row in support:
        key = orbit_key(row)
        if key not in seen:
            seen.add(key)
            yield row


def split_merge_bound(n: int, k: int, beta: float, m: int) -> float:
    """
    Lower bound on α ∧ γ at orbit distance ``m`` for K ≥ 3.

    ``nm/(βK) - m²`` when ``m ≤ n/(2βK)``, otherwise ``c_β·nm/K`` with
    ``c_β = (5 - 3β²)/(36β)``.
    """
    if m == 0:
        return 0.0
    if m <= n / (2 * beta * k):
        return n * m / (beta * k) - m * m
    return (5 - 3 * beta * beta) / (36 * beta) * n * m / k


def check_split_merge_bounds(params: SbmParams) -> LemmaCheck:
    """Exhaustive split/merge lower bound over all pairs of Σ_β (K ≥ 3)."""
    if params.k < 3:
        raise InvalidParameter("the split/merge lower bound needs K >= 3")
    support = balanced_array(params.n, params.k, params.beta)
    worst = math.inf
    worst_pair = (0.0, 0.0)
    for truth in _truths(support):
        alpha, gamma, m = split_merge_table(support, truth, params.k)
        bounds = np.array(
            [split_merge_bound(params.n, params.k, params.beta, int(x)) for x in m]
        )
        slack = np.minimum(alpha, gamma) - bounds
        index = int(np.argmin(slack))
        if slack[index] < worst:
            worst = float(slack[index])
            worst_pair = (float(bounds[index]), float(min(alpha[index], gamma[index])))
    return LemmaCheck(
        "split_merge_lower_bound",
        _describe(params),
        worst_pair[0],
        worst_pair[1],
        worst >= -LEMMA_TOL,
    )


def check_k2_identity(params: SbmParams) -> LemmaCheck:
    """Exhaustive α + γ = m(n - m) over all pairs of Σ_β (K = 2)."""
    if params.k != 2:
        raise InvalidParameter("the split/merge identity holds for K = 2")
    support = balanced_array(params.n, params.k, params.beta)
    mismatches = 0
    for truth in _truths(support):
        alpha, gamma, m = split_merge_table(support, truth, 2)
        mismatches += int(np.count_nonzero(alpha + gamma != m * (params.n - m)))
    return LemmaCheck(
        "k2_split_merge_identity", _describe(params), mismatches, 0, mismatches == 0
    )


@dataclass(frozen=True, slots=True)
class NearOptimalProfile:
    """Sizes of the near-optimal sets S_s(A) on a grid of slacks."""

    thresholds: np.ndarray
    set_sizes: np.ndarray
    linear_bound_params: tuple[float, float]
    """``(B, C1)``: the linear envelope is ``B·s + C1·log(nK)``."""
    linear_bound: np.ndarray
    """``B·s + C1·log(nK)`` per threshold, to compare with ``log(set_sizes)``."""


def _level_sizes(scores: np.ndarray, thresholds) -> np.ndarray:
    best = scores.max()
    ordered = np.sort(scores)
    cut = best - np.asarray(thresholds, dtype=np.float64) - LEMMA_TOL
    return scores.size - np.searchsorted(ordered, cut, side="left")


def near_optimal_sets(
    ctx: ScoreContext,
    params: SbmParams,
    s_grid,
    c0: float = C0,
    c1: float = C1,
) -> NearOptimalProfile:
    """Exact |S_s(A)| = #{σ ∈ Σ_β : T(σ) ≥ max T - s} by a full scan."""
    support = balanced_array(params.n, params.k, params.beta)
    if len(support) == 0:
        raise EmptySigma(f"Σ_β is empty for {params}")
    scores = score_matrix(support, ctx.vector, ctx.lam)
    thresholds = np.asarray(s_grid, dtype=np.float64)
    entropy = math.log(params.n * params.k)
    slope = c0 * params.k * entropy / (params.n * renyi_half(params))
    return NearOptimalProfile(
        thresholds=thresholds,
        set_sizes=_level_sizes(scores, thresholds),
        linear_bound_params=(slope, c1),
        linear_bound=slope * thresholds + c1 * entropy,
    )


@dataclass(frozen=True, slots=True)
class PeelingCheck:
    """Probability of an output at least ``s`` below the best, and its bounds."""

    exact_lhs: float
    peeled_rhs: float
    shifted_rhs: float
    s: float

    @property
    def passed(self) -> bool:
        """Whether the exact probability is within the peeled bound."""
        return self.exact_lhs <= self.peeled_rhs + LEMMA_TOL


def _layer_sum(scores: np.ndarray, eta: float, s: float, shift: int) -> float:
    """Σ_{ℓ≥1} |S_{(ℓ+shift)s}| e^{-ηℓs}, summing the constant tail analytically."""
    if eta * s == 0:
        return math.inf
    spread = float(scores.max() - scores.min())
    full = scores.size
    total = 0.0
    layer = 1
    while (layer + shift) * s < spread:
        decay = math.exp(-eta * layer * s)
        if full * decay < PEELING_UNDERFLOW:
            return total
        total += int(_level_sizes(scores, [(layer + shift) * s])[0]) * decay
        layer += 1
    # From here on every level set is all of Σ_β.
    return total + full * math.exp(-eta * layer * s) / -math.expm1(-eta * s)


def peeling_bound_check(
    ctx: ScoreContext, cfg: MechanismConfig, params: SbmParams, s: float
) -> PeelingCheck:
    """
    Exact P(T(σ̂) ≤ max T - s) against the peeled layer sums.

    ``peeled_rhs`` is Σ_{ℓ≥1} |S_{ℓs}| e^{-ηℓs}; ``shifted_rhs`` uses
    |S_{(ℓ+1)s}| and bounds the probability at every η.
    """
    if not s > 0:
        raise InvalidParameter(f"slack must be positive, got {s}")
    dist = em_distribution(ctx, cfg, params)
    scores = dist.scores
    low = scores <= scores.max() - s + LEMMA_TOL
    return PeelingCheck(
        exact_lhs=float(dist.probabilities[low].sum()),
        peeled_rhs=_layer_sum(scores, cfg.eta, s, 0),
        shifted_rhs=_layer_sum(scores, cfg.eta, s, 1),
        s=s,
    )


def _orbit_layers(params: SbmParams, truth: Labeling):
    support = balanced_array(params.n, params.k, params.beta)
    if len(support) == 0:
        raise EmptySigma(f"Σ_β is empty for {params}")
    representatives = list(_truths(support))
    stack = np.array(representatives)
    alpha, gamma, m = split_merge_table(stack, truth.array, params.k)
    return stack, alpha, gamma, m


def orbit_census(params: SbmParams, truth: Labeling) -> dict[int, int]:
    """Number of label orbits of Σ_β at each orbit distance m from the truth."""
    _, _, _, m = _orbit_layers(params, truth)
    return dict(sorted(Counter(int(x) for x in m).items()))


def orbit_count_bound(n: int, k: int, m: int) -> float:
    """min{(enK/m)^m, K^n}."""
    if m == 0:
        return 1.0
    return min(math.exp(m * (1 + math.log(n * k / m))), float(k) ** n)


def orbit_bound_checks(params: SbmParams, truth: Labeling) -> list[LemmaCheck]:
    """Orbit counts against min{(enK/m)^m, K^n} for every populated m ≥ 1."""
    return [
        LemmaCheck(
            "orbit_count",
            f"{_describe(params)} m={m}",
            count,
            orbit_count_bound(params.n, params.k, m),
            count <= orbit_count_bound(params.n, params.k, m) * (1 + LEMMA_TOL),
        )
        for m, count in orbit_census(params, truth).items()
        if m >= 1
    ]


def orbit_risk_bound(
    params: SbmParams, truth: Labeling, s: float
) -> tuple[float, float]:
    """
    Orbit-weighted tail sum and its slack-propagated bound.

    Returns ``(exact, bound)`` where ``exact`` is (1/n)·Σ over orbits at distance
    m ≥ 1 of m·P(T(σ) ≥ T(σ₀) - s) and ``bound`` is e^{t*s}/n · Σ_m m·|G_m|·q_m with
    q_m the largest e^{-I(α∧γ)} over the orbits at distance m.
    """
    stack, alpha, gamma, m = _orbit_layers(params, truth)
    renyi = renyi_half(params)
    exact = 0.0
    worst: dict[int, float] = {}
    counts: Counter = Counter()
    for row, a, g, distance in zip(stack, alpha, gamma, m):
        distance = int(distance)
        if distance == 0:
            continue
        sigma = Labeling.from_array(row, params.k)
        exact += distance * exact_tail_probability(params, truth, sigma, s)
        q = math.exp(-renyi * min(int(a), int(g)))
        worst[distance] = max(worst.get(distance, 0.0), q)
        counts[distance] += 1
    propagated = sum(d * counts[d] * worst[d] for d in counts)
    bound = math.exp(chernoff_tilt(params) * s) * propagated / params.n
    return exact / params.n, bound


def _describe(params: SbmParams) -> str:
    return (
        f"n={params.n} K={params.k} a={params.a:g} b={params.b:g} "
        f"beta={params.beta:g}"
    )


def _params_or_none(n, k, a, b, beta) -> SbmParams | None:
    try:
        params = SbmParams(n, k, a, b, beta)
        balanced_default(params)
    except (ValidationError, EmptySigma) as exc:
        logger.debug("skipping n=%d K=%d beta=%g: %s", n, k, beta, exc)
        return None
    return params


def _chernoff_checks(cfg) -> Iterator[LemmaCheck]:
    for n in cfg.chernoff_n:
        params = _params_or_none(n, 2, cfg.a, cfg.b, cfg.chernoff_beta)
        if params is None:
            continue
        rows = balanced_array(n, 2, params.beta)
        labelings = [Labeling.from_array(row, 2) for row in rows]
        for truth, sigma in itertools.product(labelings, repeat=2):
            for check in chernoff_bound_check(
                params, truth, sigma, cfg.s_grid, cfg.lambda_override
            ):
                yield LemmaCheck(
                    "chernoff_slack",
                    f"{_describe(params)} truth={truth} sigma={sigma}"
                    f" s={check.slack_s:g}",
                    check.lhs,
                    check.rhs,
                    check.passed,
                )


def _reduction_checks(cfg) -> Iterator[LemmaCheck]:
    for n in cfg.reduction_n:
        params = _params_or_none(n, 2, cfg.a, cfg.b, cfg.reduction_beta)
        if params is None:
            continue
        rows = balanced_array(n, 2, params.beta)
        labelings = [Labeling.from_array(row, 2) for row in rows]
        worst = 0.0
        for truth, sigma in itertools.product(labelings, repeat=2):
            for s in cfg.s_grid:
                outcome = exact_tail_probability(params, truth, sigma, s)
                graph = graph_tail_probability(params, truth, sigma, s)
                worst = max(worst, abs(outcome - graph))
        yield LemmaCheck(
            "bernoulli_reduction", _describe(params), worst, 0.0, worst <= LEMMA_TOL
        )


def _peeling_checks(cfg) -> Iterator[LemmaCheck]:
    params = _params_or_none(cfg.peeling_n, 2, cfg.a, cfg.b, 1.0)
    if params is None:
        return
    mechanism = MechanismConfig.create(params, cfg.epsilon, cfg.envelope_c)
    truth = balanced_default(params)
    for instance in range(cfg.peeling_instances):
        graph = sample_sbm(params, truth, child_seed(cfg.seed, instance))
        ctx = ScoreContext.from_params(graph, params)
        for s in cfg.peeling_s_grid:
            check = peeling_bound_check(ctx, mechanism, params, s)
            yield LemmaCheck(
                "peeling",
                f"{_describe(params)} graph={instance} s={s:g}",
                check.exact_lhs,
                check.peeled_rhs,
                check.passed,
            )


def _orbit_checks(cfg) -> Iterator[LemmaCheck]:
    for n, k in itertools.product(cfg.orbit_n, cfg.orbit_k):
        params = _params_or_none(n, k, cfg.a, cfg.b, cfg.orbit_beta)
        if params is None:
            continue
        truth = balanced_default(params)
        yield from orbit_bound_checks(params, truth)
        exact, bound = orbit_risk_bound(params, truth, cfg.orbit_s)
        yield LemmaCheck(
            "orbit_risk",
            f"{_describe(params)} s={cfg.orbit_s:g}",
            exact,
            bound,
            exact <= bound + LEMMA_TOL,
        )


def run_verification(cfg) -> list[LemmaCheck]:
    """
    Run every exhaustive lemma check configured in ``cfg``.

    ``cfg`` is a :class:`privsbm.config.VerifySection`. Parameter combinations whose
    class-size window or Σ_β is empty are skipped.
    """
    checks: list[LemmaCheck] = []
    checks.extend(_chernoff_checks(cfg))
    checks.extend(_reduction_checks(cfg))
    for n in cfg.identity_n:
        params = _params_or_none(n, 2, cfg.a, cfg.b, cfg.identity_beta)
        if params is not None:
            checks.append(check_k2_identity(params))
    for beta in cfg.split_merge_betas:
        params = _params_or_none(
            cfg.split_merge_n, cfg.split_merge_k, cfg.a, cfg.b, beta
        )
        if params is not None:
            checks.append(check_split_merge_bounds(params))
    checks.extend(_peeling_checks(cfg))
    checks.extend(_orbit_checks(cfg))
    failed = sum(not check.passed for check in checks)
    logger.info("verification: %d checks, %d failed", len(checks), failed)
    return checks


def write_checks_csv(checks: list[LemmaCheck], path: Path) -> None:
    """Write ``lemma,instance,lhs,rhs,margin,pass`` rows."""
    rows = [
        {
            "lemma": check.lemma,
            "instance": check.instance,
            "lhs": float(check.lhs),
            "rhs": float(check.rhs),
            "margin": float(check.margin),
            "pass": check.passed,
        }
        for check in checks
    ]
    write_csv(rows, ("lemma", "instance", "lhs", "rhs", "margin", "pass"), path)


def write_junit(checks: list[LemmaCheck], path: Path) -> None:
    """Write a JUnit-style XML summary, one test suite per lemma."""
    root = ET.Element("testsuites", name="privsbm-verify")
    suites: dict[str, ET.Element] = {}
    for check in checks:
        suite = suites.get(check.lemma)
        if suite is None:
            suite = suites[check.lemma] = ET.SubElement(
                root, "testsuite", name=check.lemma
            )
        case = ET.SubElement(
            suite, "testcase", classname=check.lemma, name=check.instance
        )
        if not check.passed:
            failure = ET.SubElement(case, "failure", message="inequality violated")
            failure.text = f"lhs={check.lhs!r} rhs={check.rhs!r}"
    for name, suite in suites.items():
        cases = [c for c in checks if c.lemma == name]
        suite.set("tests", str(len(cases)))
        suite.set("failures", str(sum(not c.passed for c in cases)))
    root.set("tests", str(len(checks)))
    root.set("failures", str(sum(not c.passed for c in checks)))
    ET.indent(root)
    ET.ElementTree(root).write(path, encoding="utf-8", xml_declaration=True)
