"""Monte Carlo risk sweeps, feasibility and lower-bound overlays."""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.optimize import isotonic_regression

from .defaults import (
    C0,
    C1,
    C3,
    C_MILD_GROWTH,
    C_SIGNAL,
    CHAIN_STEPS,
    ENUMERATION_CAP,
    ENVELOPE_C,
)
from .errors import InvalidParameter
from .formats import write_csv
from .graph_model import (
    SbmParams,
    balanced_default,
    mismatch_ratio,
    sample_sbm,
    sample_uniform_balanced,
)
from .info_quantities import renyi_half, signal_value
from .mechanism import (
    FALLBACKS,
    SAMPLERS,
    MechanismConfig,
    maximize_score,
    run_private_estimator,
)
from .parallel import ordered_map
from .privacy_audit import mismatch_floor
from .rng import child_seed, stream
from .score_engine import DegreeEnvelope, ScoreContext
from .stats import mean_interval, wilson_interval

logger = logging.getLogger(__name__)

RISK_COLUMNS = (
    "n",
    "K",
    "a",
    "b",
    "beta",
    "epsilon",
    "C",
    "sampler",
    "replicates",
    "mean_r",
    "ci_lo",
    "ci_hi",
    "fail_frac",
    "fail_ci_lo",
    "fail_ci_hi",
    "envelope_exit_frac",
    "mle_mean_r",
    "floor_lb",
    "signal",
    "nI",
    "feasible",
)
OVERLAY_COLUMNS = (
    "n",
    "K",
    "a",
    "b",
    "beta",
    "epsilon",
    "C",
    "mean_r",
    "ci_lo",
    "ci_hi",
    "floor_lb",
    "nonprivate_reference",
    "floor_ok",
)
TRUTHS = ("default", "uniform")


@dataclass(frozen=True, slots=True)
class SweepCell:
    """One grid point of a sweep."""

    index: int
    params: SbmParams
    epsilon: float
    c: float
    sampler: str


@dataclass(frozen=True)
class SweepConfig:
    """
    Grids and settings of a risk sweep.

    Every combination of ``n, k, a, b, beta, epsilon, c`` is one cell. ``sampler``
    is one of the mechanism samplers or ``"auto"``: exact when K^n is within the
    enumeration cap, Metropolis otherwise. ``truth`` selects the contiguous-block
    labeling (``"default"``) or a uniform draw from Σ_β per replicate.
    """

    n: tuple[int, ...]
    k: tuple[int, ...]
    a: tuple[float, ...]
    b: tuple[float, ...]
    beta: tuple[float, ...] = (1.0,)
    epsilon: tuple[float, ...] = (1.0,)
    c: tuple[float, ...] = (ENVELOPE_C,)
    replicates: int = 1000
    sampler: str = "auto"
    chain_steps: int = CHAIN_STEPS
    fallback: str = "uniform_balanced"
    truth: str = "default"
    w: float | None = None
    c_s: float = C_SIGNAL
    c_mg: float = C_MILD_GROWTH
    c0: float = C0
    c1: float = C1
    c3: float = C3

    def __post_init__(self):
        if self.replicates < 1:
            raise InvalidParameter(f"replicates must be >= 1, got {self.replicates}")
        if self.sampler not in (*SAMPLERS, "auto"):
            raise InvalidParameter(f"sampler must be one of {SAMPLERS} or 'auto'")
        if self.fallback not in FALLBACKS:
            raise InvalidParameter(f"fallback must be one of {FALLBACKS}")
        if self.truth not in TRUTHS:
            raise InvalidParameter(f"truth must be one of {TRUTHS}")
        for cell in self.cells():
            self.mechanism(cell)

    def cells(self) -> list[SweepCell]:
        """Every grid cell, validated, in grid order."""
        grid = itertools.product(
            self.n, self.k, self.a, self.b, self.beta, self.epsilon, self.c
        )
        cells = []
        for index, (n, k, a, b, beta, epsilon, c) in enumerate(grid):
            sampler = self.sampler
            if sampler == "auto":
                sampler = "exact" if k**n <= ENUMERATION_CAP else "metropolis"
            params = SbmParams(n, k, a, b, beta)
            cells.append(SweepCell(index, params, epsilon, c, sampler))
        return cells

    def mechanism(self, cell: SweepCell) -> MechanismConfig:
        """Mechanism of ``cell``."""
        return MechanismConfig(
            cell.epsilon,
            DegreeEnvelope.for_params(cell.params, cell.c),
            sampler=cell.sampler,
            chain_steps=self.chain_steps,
            fallback=self.fallback,
            w=self.w if cell.params.k >= 3 else None,
        )


@dataclass(frozen=True, slots=True)
class FeasibilityReport:
    """Intermediate quantities of the upper bound for one cell."""

    b_const: float
    eta: float
    gamma0: float
    s_star: float
    log_alpha: float
    feasible: bool

    @property
    def alpha(self) -> float:
        """Failure level of the bound, underflowing to 0 for very large ε."""
        return math.exp(self.log_alpha)


def _slope(params: SbmParams, c0: float) -> float:
    n_i = params.n * renyi_half(params)
    if n_i == 0:
        return math.inf
    return c0 * params.k * math.log(params.n * params.k) / n_i


def feasibility_report(
    params: SbmParams,
    epsilon: float,
    c: float = ENVELOPE_C,
    c0: float = C0,
    c1: float = C1,
    c3: float = C3,
) -> FeasibilityReport:
    """
    B, η, γ₀ = η - B, s* and the failure level α of the upper bound.

    α is 1/(nK), multiplied by e^{-c3·ε/2} when η ≥ 2B; it is carried as log α so
    that s* stays finite at any ε. The cell is feasible iff γ₀ > 0, and s* is
    infinite otherwise.
    """
    envelope = DegreeEnvelope.for_params(params, c)
    eta = epsilon / (4 * envelope.delta_a)
    slope = _slope(params, c0)
    gamma0 = eta - slope
    entropy = math.log(params.n * params.k)
    log_alpha = -entropy
    if eta >= 2 * slope:
        log_alpha -= c3 * epsilon / 2
    if gamma0 > 0:
        s_star = (c1 * entropy + math.log(4) - log_alpha) / gamma0
    else:
        s_star = math.inf
    return FeasibilityReport(slope, eta, gamma0, s_star, log_alpha, gamma0 > 0)


def feasibility_threshold(
    params: SbmParams, c: float = ENVELOPE_C, c0: float = C0
) -> float:
    """Smallest ε with γ₀ ≥ 0, i.e. 4Δ_a·B."""
    return 4 * DegreeEnvelope.for_params(params, c).delta_a * _slope(params, c0)


@dataclass(frozen=True, slots=True)
class RiskCell:
    """Aggregated replicates of one sweep cell."""

    n: int
    K: int
    a: float
    b: float
    beta: float
    epsilon: float
    C: float
    sampler: str
    replicates: int
    mean_r: float
    ci_lo: float
    ci_hi: float
    fail_frac: float
    fail_ci_lo: float
    fail_ci_hi: float
    envelope_exit_frac: float
    mle_mean_r: float
    mle_ci_lo: float
    mle_ci_hi: float
    floor_lb: float
    signal: float
    nI: float
    feasible: bool


@dataclass(frozen=True, slots=True)
class RiskReport:
    """Per-cell risk estimates of a sweep, in grid order."""

    cells: tuple[RiskCell, ...]

    def rows(self) -> list[dict]:
        """Cells as mappings."""
        return [asdict(cell) for cell in self.cells]


def _run_replicate(task) -> tuple[float, bool, float]:
    cfg, cell, replicate, seed = task
    params = cell.params
    keys = (seed, cell.index, replicate)
    if cfg.truth == "default":
        truth = balanced_default(params)
    else:
        truth = sample_uniform_balanced(params, stream(*keys, 0))
    graph = sample_sbm(params, truth, child_seed(*keys, 1))
    mechanism = cfg.mechanism(cell)
    estimate, record = run_private_estimator(
        graph, mechanism, params, child_seed(*keys, 2)
    )
    # Abstentions count as a complete mismatch.
    r = 1.0 if estimate is None else mismatch_ratio(truth, estimate, params.k)
    ctx = ScoreContext.from_params(graph, params, mechanism.w)
    mle, _ = maximize_score(ctx, params, child_seed(*keys, 3))
    return r, not record.envelope_member, mismatch_ratio(truth, mle, params.k)


def _aggregate(cfg: SweepConfig, cell: SweepCell, outcomes) -> RiskCell:
    params = cell.params
    risks = np.array([outcome[0] for outcome in outcomes])
    exits = sum(outcome[1] for outcome in outcomes)
    mle = np.array([outcome[2] for outcome in outcomes])
    failures = int(np.count_nonzero(risks > 0))
    mean_r, ci_lo, ci_hi = mean_interval(risks)
    mle_mean, mle_lo, mle_hi = mean_interval(mle)
    fail_lo, fail_hi = wilson_interval(failures, len(risks))
    n_i = params.n * renyi_half(params)
    feasibility = feasibility_report(
        params, cell.epsilon, cell.c, cfg.c0, cfg.c1, cfg.c3
    )
    return RiskCell(
        n=params.n,
        K=params.k,
        a=params.a,
        b=params.b,
        beta=params.beta,
        epsilon=cell.epsilon,
        C=cell.c,
        sampler=cell.sampler,
        replicates=len(risks),
        mean_r=mean_r,
        ci_lo=ci_lo,
        ci_hi=ci_hi,
        fail_frac=failures / len(risks),
        fail_ci_lo=fail_lo,
        fail_ci_hi=fail_hi,
        envelope_exit_frac=exits / len(risks),
        mle_mean_r=mle_mean,
        mle_ci_lo=mle_lo,
        mle_ci_hi=mle_hi,
        floor_lb=mismatch_floor(params.n, cell.epsilon),
        signal=signal_value(n_i, params.k, params.beta),
        nI=n_i,
        feasible=feasibility.feasible,
    )


def run_risk_sweep(cfg: SweepConfig, seed: int = 0, workers: int = 1) -> RiskReport:
    """
    Estimate the private and non-private risks of every cell.

    Replicate ``r`` of cell ``i`` draws all of its randomness from streams keyed by
    ``(seed, i, r)``, so the report does not depend on ``workers``.
    """
    cells = cfg.cells()
    for cell in cells:
        if cell.sampler == "metropolis":
            logger.warning(
                "cell %d (n=%d) uses the Metropolis sampler, risks are approximate",
                cell.index,
                cell.params.n,
            )
    tasks = [
        (cfg, cell, replicate, seed)
        for cell in cells
        for replicate in range(cfg.replicates)
    ]
    outcomes = ordered_map(_run_replicate, tasks, workers)
    report = []
    for cell in cells:
        start = cell.index * cfg.replicates
        result = _aggregate(cfg, cell, outcomes[start : start + cfg.replicates])
        logger.info(
            "cell %d: mean r %g, failure %g",
            cell.index,
            result.mean_r,
            result.fail_frac,
        )
        report.append(result)
    return RiskReport(tuple(report))


def _risk_upper(cell: RiskCell) -> float:
    return max(cell.ci_hi, cell.fail_ci_hi / cell.n)


def lower_bound_overlay(report: RiskReport) -> list[dict]:
    """
    Measured risk of each cell next to its floors.

    ``floor_lb`` is 1/(n(1 + e^{2ε})) and ``nonprivate_reference`` is e^{-Signal}.
    ``floor_ok`` is whether the risk can still reach the floor: the floor bounds
    Pr(r > 0)/n from below, so the upper end is the larger of the risk CI and the
    Wilson bound on the failure fraction over n, which stays positive when no
    replicate fails.
    """
    if not report.cells:
        raise InvalidParameter("cannot overlay an empty report")
    return [
        {
            "n": cell.n,
            "K": cell.K,
            "a": cell.a,
            "b": cell.b,
            "beta": cell.beta,
            "epsilon": cell.epsilon,
            "C": cell.C,
            "mean_r": cell.mean_r,
            "ci_lo": cell.ci_lo,
            "ci_hi": cell.ci_hi,
            "floor_lb": cell.floor_lb,
            "nonprivate_reference": math.exp(-cell.signal),
            "floor_ok": _risk_upper(cell) >= cell.floor_lb,
        }
        for cell in report.cells
    ]


def isotonic_residual(values) -> float:
    """Largest distance of a sequence from its best non-increasing fit."""
    values = np.asarray(values, dtype=np.float64)
    if values.size < 2:
        return 0.0
    fit = isotonic_regression(values, increasing=False).x
    return float(np.abs(values - fit).max())


@dataclass(frozen=True, slots=True)
class TrendCheck:
    """Monotonicity in ε of the risk of the cells that differ only in ε."""

    group: tuple
    residual: float
    ci_width: float

    @property
    def passed(self) -> bool:
        """Whether the isotonic residual is below the widest CI."""
        return self.residual <= self.ci_width


def epsilon_trends(report: RiskReport) -> list[TrendCheck]:
    """Isotonic residual of mean risk against ascending ε, per group of cells."""
    groups: dict[tuple, list[RiskCell]] = {}
    for cell in report.cells:
        key = (cell.n, cell.K, cell.a, cell.b, cell.beta, cell.C, cell.sampler)
        groups.setdefault(key, []).append(cell)
    checks = []
    for key, cells in groups.items():
        cells.sort(key=lambda cell: cell.epsilon)
        residual = isotonic_residual([cell.mean_r for cell in cells])
        width = max(cell.ci_hi - cell.ci_lo for cell in cells)
        checks.append(TrendCheck(key, residual, width))
    return checks


def write_risk_csv(report: RiskReport, path: Path) -> None:
    """Write the risk table with exactly :data:`RISK_COLUMNS`."""
    write_csv(report.rows(), RISK_COLUMNS, path)


def write_overlay_csv(rows: list[dict], path: Path) -> None:
    """Write the overlay table with exactly :data:`OVERLAY_COLUMNS`."""
    write_csv(rows, OVERLAY_COLUMNS, path)
