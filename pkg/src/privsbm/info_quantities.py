"""Closed-form information quantities of the homogeneous SBM."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .defaults import C_MILD_GROWTH, C_SIGNAL, DEFAULT_W
from .errors import InvalidParameter, InvalidProbability, TiltUndefined
from .graph_model import SbmParams


def _probabilities(params: SbmParams) -> tuple[float, float]:
    p, q = params.p, params.q
    for name, value in (("a/n", p), ("b/n", q)):
        if not 0 <= value <= 1:
            raise InvalidProbability(f"{name} = {value} is not a probability")
    return p, q


def renyi_half(params: SbmParams) -> float:
    """
    Order-½ Rényi divergence I between Ber(a/n) and Ber(b/n).

    ``I = -2 log(√(pq) + √((1-p)(1-q)))``, evaluated through the Hellinger form
    ``-2 log1p(-h)`` with ``h = ½[(√p-√q)² + (√(1-p)-√(1-q))²]`` so that nearly equal
    laws keep their relative precision.
    """
    p, q = _probabilities(params)
    h = 0.5 * (
        (math.sqrt(p) - math.sqrt(q)) ** 2
        + (math.sqrt(1 - p) - math.sqrt(1 - q)) ** 2
    )
    return -2.0 * math.log1p(-h)


def chernoff_tilt(params: SbmParams) -> float:
    """Chernoff tilt t* = ½ log(a(1 - b/n) / (b(1 - a/n)))."""
    p, q = _probabilities(params)
    if not 0 < q < p < 1:
        raise TiltUndefined(
            f"tilt needs 0 < b < a < n, got a={params.a}, b={params.b}, n={params.n}"
        )
    return 0.5 * (math.log(p) + math.log1p(-q) - math.log(q) - math.log1p(-p))


def lambda_interval(params: SbmParams) -> tuple[float, float]:
    """
    Admissible penalty interval of the Chernoff comparison.

    ``[(1/t*) log(q e^{t*} + 1 - q), -(1/t*) log(p e^{-t*} + 1 - p)]``. Without
    signal (a = b) both endpoints tend to q and that limit is returned.
    """
    p, q = _probabilities(params)
    if p == q:
        return q, q
    t = chernoff_tilt(params)
    left = math.log1p(q * math.expm1(t)) / t
    right = -math.log1p(p * math.expm1(-t)) / t
    return left, right


def penalty_lambda(params: SbmParams, w: float | None = None) -> float:
    """
    Penalty λ of the score T_A.

    For K = 2 it is the midpoint of :func:`lambda_interval` and ``w`` must be left
    unset. For K ≥ 3 it is ``w·right + (1 - w)·left`` with ``w`` in [0, 1]
    (default ``DEFAULT_W``).
    """
    left, right = lambda_interval(params)
    if params.k == 2:
        if w is not None:
            raise InvalidParameter("w is fixed at the midpoint for K = 2")
        return 0.5 * (left + right)
    if w is None:
        w = DEFAULT_W
    if not 0 <= w <= 1:
        raise InvalidParameter(f"w must lie in [0, 1], got {w}")
    return w * right + (1 - w) * left


def chernoff_conditions(params: SbmParams, lam: float) -> tuple[float, float]:
    """
    The two exponential factors whose being ≤ 1 is equivalent to λ admissible.

    Returns ``(e^{-t*λ}(q e^{t*} + 1 - q), e^{t*λ}(p e^{-t*} + 1 - p))``.
    """
    t = chernoff_tilt(params)
    p, q = params.p, params.q
    merge = math.exp(-t * lam + math.log1p(q * math.expm1(t)))
    split = math.exp(t * lam + math.log1p(p * math.expm1(-t)))
    return merge, split


def phi(params: SbmParams, t: float) -> float:
    """Moment product Φ(t) = (q e^{t} + 1 - q)(p e^{-t} + 1 - p)."""
    p, q = params.p, params.q
    return (1 + q * math.expm1(t)) * (1 + p * math.expm1(-t))


def signal_value(n_i: float, k: int, beta: float) -> float:
    """Signal: nI/2 for K = 2 and nI/(βK) for K ≥ 3."""
    if k == 2:
        return n_i / 2
    return n_i / (beta * k)


def signal(params: SbmParams) -> float:
    """Signal of ``params``."""
    return signal_value(params.n * renyi_half(params), params.k, params.beta)


@dataclass(frozen=True, slots=True)
class InfoQuantities:
    """Derived scalars of an SBM instance."""

    renyi: float
    t_star: float
    lam: float
    signal: float
    n_i: float
    w: float | None


def compute_info(params: SbmParams, w: float | None = None) -> InfoQuantities:
    """Bundle I, t*, λ, Signal and nI for ``params``."""
    renyi = renyi_half(params)
    if params.k >= 3 and w is None:
        w = DEFAULT_W
    return InfoQuantities(
        renyi=renyi,
        t_star=chernoff_tilt(params),
        lam=penalty_lambda(params, w),
        signal=signal_value(params.n * renyi, params.k, params.beta),
        n_i=params.n * renyi,
        w=w,
    )


@dataclass(frozen=True, slots=True)
class AssumptionReport:
    """Signal-entropy separation and mild growth of K, with margins."""

    signal_entropy_ok: bool
    signal_margin: float
    mild_k_ok: bool
    mild_k_margin: float
    c_s: float
    c_mg: float


def check_assumptions(
    params: SbmParams, c_s: float = C_SIGNAL, c_mg: float = C_MILD_GROWTH
) -> AssumptionReport:
    """
    Check Signal ≥ C_s·log(nK) and log(nK) ≥ C_mg·K·log K.

    Margins are the ratios Signal / log(nK) and log(nK) / (K log K).
    """
    entropy = math.log(params.n * params.k)
    growth = params.k * math.log(params.k)
    value = signal(params)
    return AssumptionReport(
        signal_entropy_ok=value >= c_s * entropy,
        signal_margin=value / entropy,
        mild_k_ok=entropy >= c_mg * growth,
        mild_k_margin=entropy / growth,
        c_s=c_s,
        c_mg=c_mg,
    )
