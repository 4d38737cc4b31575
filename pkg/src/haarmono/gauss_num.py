"""Gaussian tail primitives used by every test statistic.

The score ``S(x) = 1/Phi(x) - 1`` explodes like ``exp(x**2 / 2)`` on the left
tail (``S(-37)`` is about ``e**689``), so everything here works with
``log S``.  Linear-domain values are only produced on request and saturate at
the largest finite double instead of overflowing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

__all__ = [
    "ScoreValue",
    "normal_cdf",
    "normal_sf",
    "log_normal_cdf",
    "log_score",
    "score",
    "score_asymptotic",
    "critical_snr_root",
    "critical_snr_root_log",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_MAX_LOG = math.log(np.finfo(float).max)
_ROOT_UPPER = 40.0


@dataclass(frozen=True)
class ScoreValue:
    """Score carried as its natural logarithm.

    ``log_s`` may be a float or an array.  ``value`` exponentiates with
    saturation at ``float max``.
    """

    log_s: float | np.ndarray

    @property
    def value(self) -> float | np.ndarray:
        clipped = np.minimum(self.log_s, _MAX_LOG)
        out = np.exp(clipped)
        return float(out) if np.ndim(out) == 0 else out

    @property
    def saturated(self) -> bool | np.ndarray:
        return np.asarray(self.log_s) > _MAX_LOG


def normal_cdf(x):
    """Standard normal CDF evaluated through ``erfc``.

    Both tails keep full relative precision: ``normal_cdf(-x)`` is the
    accurate complement of ``normal_cdf(x)``.
    """
    return special.ndtr(x)


def normal_sf(x):
    """Upper tail ``1 - Phi(x)`` without cancellation."""
    return special.ndtr(np.negative(x))


def log_normal_cdf(x):
    """``log Phi(x)``; uses an asymptotic series far in the left tail."""
    return special.log_ndtr(x)


def log_score(x):
    """Vectorised ``log S(x) = log(1 - Phi(x)) - log Phi(x)``."""
    x = np.asarray(x, dtype=float)
    out = special.log_ndtr(-x) - special.log_ndtr(x)
    return float(out) if out.ndim == 0 else out


def score(x) -> ScoreValue:
    """Improper-Bayes likelihood ratio for the sign of a Gaussian mean."""
    return ScoreValue(log_score(x))


def score_asymptotic(x) -> ScoreValue:
    """Left-tail expansion ``sqrt(2 pi) (1 - x) exp(x**2 / 2)`` in log form.

    Only meaningful for large negative ``x``.  The relative error against
    :func:`score` shrinks like ``1/|x|`` (about 0.44 in log at ``x = -1``,
    0.15 at ``-5``, 0.026 at ``-37``), so values near zero are crude.
    """
    xa = np.asarray(x, dtype=float)
    if np.any(xa >= 0):
        raise ValueError("score_asymptotic is one-sided: x must be negative")
    out = _LOG_SQRT_2PI + np.log1p(-xa) + 0.5 * xa * xa
    return ScoreValue(float(out) if out.ndim == 0 else out)


def critical_snr_root_log(log_z: float) -> float:
    """Root ``R >= 0`` of ``log S(-sqrt(R)) = log_z``.

    Bisection on ``r = sqrt(R)`` over ``[0, 40]`` followed by two Newton
    steps.  ``log_z`` must be nonnegative (``S(0) = 1``).
    """
    if not math.isfinite(log_z):
        raise ValueError(f"log_z must be finite, got {log_z}")
    if log_z < 0:
        raise ValueError(f"critical SNR root needs z >= 1 (log z >= 0), got log z = {log_z}")
    if log_z == 0:
        return 0.0
    upper = log_score(-_ROOT_UPPER)
    if log_z > upper:
        raise ValueError(f"log z = {log_z} beyond the supported bracket (max {upper:.1f})")

    lo, hi = 0.0, _ROOT_UPPER
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if log_score(-mid) < log_z:
            lo = mid
        else:
            hi = mid
    r = 0.5 * (lo + hi)
    for _ in range(2):
        # d/dr log S(-r) = phi(r) / (Phi(-r) Phi(r))
        deriv = math.exp(
            -0.5 * r * r - _LOG_SQRT_2PI - special.log_ndtr(-r) - special.log_ndtr(r)
        )
        step = (log_score(-r) - log_z) / deriv
        if abs(step) > 1e-6:
            break
        r -= step
    return r * r


def critical_snr_root(z: float) -> float:
    """Root ``R`` of ``S(-sqrt(R)) = z`` for ``z >= 1``."""
    if z < 1:
        raise ValueError(f"critical SNR root needs z >= 1, got {z}")
    return critical_snr_root_log(math.log(z))
