"""Confidence intervals."""

from __future__ import annotations

import numpy as np
from scipy.stats import binomtest, norm, sem

from .defaults import CI_LEVEL


def wilson_interval(
    successes: int, trials: int, level: float = CI_LEVEL
) -> tuple[float, float]:
    """Wilson score interval of a binomial proportion."""
    if trials <= 0:
        return 0.0, 1.0
    ci = binomtest(int(successes), int(trials)).proportion_ci(
        confidence_level=level, method="wilson"
    )
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


def mean_interval(values, level: float = CI_LEVEL) -> tuple[float, float, float]:
    """Mean with its normal-approximation interval ``(mean, lo, hi)``."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(values.mean())
    scale = float(sem(values)) if values.size > 1 else 0.0
    if scale == 0:
        return mean, mean, mean
    lo, hi = norm.interval(level, loc=mean, scale=scale)
    return mean, float(lo), float(hi)
