"""Arbitrary-precision reference values for the information quantities."""

from __future__ import annotations

import math
from contextlib import contextmanager

import gmpy2
from gmpy2 import mpfr

from .errors import InvalidParameter, TiltUndefined

DIGITS = 60


@contextmanager
def _precision(digits: int):
    saved = gmpy2.get_context()
    ctx = saved.copy()
    # Guard bits on top of the requested decimal digits.
    ctx.precision = math.ceil(digits * math.log2(10)) + 32
    gmpy2.set_context(ctx)
    try:
        yield ctx
    finally:
        gmpy2.set_context(saved)


def _pq(n: int, a, b) -> tuple[mpfr, mpfr]:
    return mpfr(str(a)) / n, mpfr(str(b)) / n


def renyi_half(n: int, a, b, digits: int = DIGITS) -> mpfr:
    """I = -2 log(√(pq) + √((1-p)(1-q))) at ``digits`` significant digits."""
    with _precision(digits):
        p, q = _pq(n, a, b)
        affinity = gmpy2.sqrt(p * q) + gmpy2.sqrt((1 - p) * (1 - q))
        return -2 * gmpy2.log(affinity)


def chernoff_tilt(n: int, a, b, digits: int = DIGITS) -> mpfr:
    """t* = ½ log(p(1-q) / (q(1-p)))."""
    with _precision(digits):
        p, q = _pq(n, a, b)
        if not 0 < q < p < 1:
            raise TiltUndefined(f"tilt needs 0 < b < a < n, got a={a}, b={b}, n={n}")
        return gmpy2.log(p * (1 - q) / (q * (1 - p))) / 2


def lambda_interval(n: int, a, b, digits: int = DIGITS) -> tuple[mpfr, mpfr]:
    """Admissible penalty interval at ``digits`` significant digits."""
    with _precision(digits):
        t = chernoff_tilt(n, a, b, digits + 10)
        p, q = _pq(n, a, b)
        left = gmpy2.log(q * gmpy2.exp(t) + 1 - q) / t
        right = -gmpy2.log(p * gmpy2.exp(-t) + 1 - p) / t
        return left, right


def penalty_lambda(n: int, k: int, a, b, w=None, digits: int = DIGITS) -> mpfr:
    """Penalty λ: midpoint for K = 2, ``w``-interpolation for K ≥ 3."""
    if k == 2 and w is not None:
        raise InvalidParameter("w is fixed at the midpoint for K = 2")
    with _precision(digits):
        left, right = lambda_interval(n, a, b, digits + 10)
        if k == 2:
            return (left + right) / 2
        w = mpfr("0.5") if w is None else mpfr(str(w))
        return w * right + (1 - w) * left
