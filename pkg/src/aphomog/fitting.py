"""Least-squares exponent fits on log-log data."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# fits with larger RMS log-residual are not used for pass/fail decisions
MAX_FIT_RESIDUAL = 0.2


@dataclass
class PowerFit:
    slope: float
    intercept: float
    residual: float  # RMS of natural-log residuals
    n: int

    @property
    def conclusive(self) -> bool:
        return self.n >= 2 and math.isfinite(self.slope) and self.residual <= MAX_FIT_RESIDUAL

    def predict(self, x):
        return np.exp(self.intercept) * np.asarray(x, float) ** self.slope


def fit_loglog(x, y) -> PowerFit:
    """OLS fit of ``log y = slope * log x + intercept``."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two (x, y) pairs of equal length")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    slope, intercept = np.polyfit(lx, ly, 1)
    res = ly - (slope * lx + intercept)
    return PowerFit(float(slope), float(intercept), float(np.sqrt(np.mean(res**2))), int(x.size))


def growth_exponent(x, y, floor: float = 0.0) -> PowerFit:
    """Fit ``y ~ x^slope``; values at or below ``floor`` are lifted to it.

    With ``floor > 0`` an identically tiny series yields slope 0 instead of a
    fit of round-off noise.
    """
    y = np.maximum(np.asarray(y, float), floor) if floor > 0 else np.asarray(y, float)
    return fit_loglog(x, y)
