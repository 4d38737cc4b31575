"""Dyadic local averages and their noisy estimates.

Level ``k`` has bandwidth ``h = 2**-k`` and ``n_h = 2**(k-1)`` grid points
``t = (2j + 1) h``.  The coefficient at ``(h, t)`` is the mean of ``f`` on
``[t, t + h]`` minus its mean on ``[t - h, t]``; it is nonnegative for every
nondecreasing ``f``.

Discretisation of the white noise model: ``N = 2**J`` samples at bin
midpoints, each perturbed by ``N(0, sigma**2 N)``.  A bin average over
``h N`` samples then has variance ``sigma**2 / h`` and the difference of two
adjacent averages has standard deviation ``sigma_h = sigma * sqrt(2 / h)``,
exactly the continuum value.
"""

from __future__ import annotations

import math
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "DyadicIndex",
    "SampledSignal",
    "CoefficientField",
    "level_size",
    "sigma_at_level",
    "theta_functional",
    "simulate_observation",
    "haar_estimates",
    "haar_estimates_direct",
    "sample_function",
    "read_signal",
]


def level_size(level: int) -> int:
    """Number of grid points ``n_h = 2**(level - 1)``."""
    if level < 1:
        raise ValueError(f"levels start at 1, got {level}")
    return 1 << (level - 1)


def sigma_at_level(sigma: float, level: int) -> float:
    """``sigma_h = sigma * sqrt(2 / h)`` with ``h = 2**-level``."""
    return sigma * math.sqrt(2.0 * 2.0**level)


@dataclass(frozen=True, order=True)
class DyadicIndex:
    """Bandwidth level and grid position of one coefficient."""

    level: int
    position: int

    def __post_init__(self):
        if self.level < 1:
            raise ValueError(f"level must be >= 1, got {self.level}")
        if not 0 <= self.position < level_size(self.level):
            raise ValueError(
                f"position {self.position} outside grid of level {self.level} "
                f"(n_h = {level_size(self.level)})"
            )

    @property
    def h(self) -> float:
        return 2.0 ** (-self.level)

    @property
    def t(self) -> float:
        return (2 * self.position + 1) * self.h

    @property
    def n_h(self) -> int:
        return level_size(self.level)


@dataclass(frozen=True)
class SampledSignal:
    values: np.ndarray
    noise_sigma: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1:
            raise ValueError("signal must be one-dimensional")
        n = values.size
        if n < 2 or n & (n - 1):
            raise ValueError(f"signal length must be a power of two >= 2, got {n}")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.values.size

    @property
    def resolution(self) -> int:
        """``J`` with ``N = 2**J``."""
        return self.n.bit_length() - 1


@dataclass(frozen=True)
class CoefficientField:
    """Coefficients for levels ``1..max_level`` stored as one array per level.

    ``sigma`` is the continuum noise level; per-level scales follow
    :func:`sigma_at_level`.
    """

    levels: Mapping[int, np.ndarray]
    sigma: float = 1.0
    max_level: int = field(init=False)

    def __post_init__(self):
        arrays = {}
        for k in sorted(self.levels):
            arr = np.array(self.levels[k], dtype=float)
            if arr.shape != (level_size(k),):
                raise ValueError(f"level {k} needs {level_size(k)} entries, got shape {arr.shape}")
            arr.setflags(write=False)
            arrays[k] = arr
        if sorted(arrays) != list(range(1, len(arrays) + 1)):
            raise ValueError("levels must be exactly 1..max_level")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        object.__setattr__(self, "levels", arrays)
        object.__setattr__(self, "max_level", len(arrays))

    @classmethod
    def zeros(cls, max_level: int, sigma: float = 1.0) -> CoefficientField:
        return cls({k: np.zeros(level_size(k)) for k in range(1, max_level + 1)}, sigma)

    @classmethod
    def from_function(cls, f: Callable[[float], float], max_level: int, sigma: float = 1.0):
        return cls(
            {
                k: [theta_functional(f, DyadicIndex(k, j)) for j in range(level_size(k))]
                for k in range(1, max_level + 1)
            },
            sigma,
        )

    def sigma_h(self, level: int) -> float:
        return sigma_at_level(self.sigma, level)

    def standardized(self, level: int) -> np.ndarray:
        """``theta_hat / sigma_h`` at one level."""
        return self.levels[level] / self.sigma_h(level)

    def __getitem__(self, idx: DyadicIndex) -> float:
        return float(self.levels[idx.level][idx.position])

    def __iter__(self) -> Iterator[DyadicIndex]:
        for k, arr in self.levels.items():
            for j in range(arr.size):
                yield DyadicIndex(k, j)

    def __len__(self) -> int:
        return sum(arr.size for arr in self.levels.values())

    def replace_levels(self, levels: Mapping[int, np.ndarray], sigma: float | None = None):
        return CoefficientField(levels, self.sigma if sigma is None else sigma)


def theta_functional(f: Callable[[float], float], idx: DyadicIndex, points=None) -> float:
    """Right-minus-left local average of ``f`` around ``idx`` by adaptive quadrature."""
    h, t = idx.h, idx.t
    if t - h < 0 or t + h > 1:
        raise ValueError(f"{idx} is not admissible")
    kw = {"epsabs": 1e-10, "epsrel": 1e-12, "limit": 200}
    pts = np.asarray([] if points is None else points, dtype=float)

    def _inner(a, b):
        inside = pts[(pts > a) & (pts < b)]
        return inside if inside.size else None

    right_pts, left_pts = _inner(t, t + h), _inner(t - h, t)
    right, _ = integrate.quad(f, t, t + h, points=right_pts, **kw)
    left, _ = integrate.quad(f, t - h, t, points=left_pts, **kw)
    return (right - left) / h


def simulate_observation(truth: CoefficientField, seed) -> CoefficientField:
    """``theta_hat = theta + sigma_h * xi`` with independent standard normal ``xi``."""
    rng = np.random.default_rng(seed)
    noisy = {}
    for k, arr in truth.levels.items():
        noisy[k] = arr + truth.sigma_h(k) * rng.standard_normal(arr.size)
    return truth.replace_levels(noisy)


def haar_estimates(y: SampledSignal, max_level: int | None = None) -> CoefficientField:
    """All coefficient estimates up to ``max_level`` in one bottom-up pass.

    Block sums are halved in count at each step (``O(N)`` total).  At level
    ``k`` the blocks have ``N / 2**k`` samples and the estimate at position
    ``j`` is ``(sum[2j + 1] - sum[2j]) / block``.  Default ``max_level`` is
    ``J - 2``.
    """
    J = y.resolution
    if max_level is None:
        max_level = max(J - 2, 1)
    if not 1 <= max_level <= J:
        raise ValueError(f"max_level must lie in 1..{J}, got {max_level}")

    sums = y.values
    levels = {}
    for k in range(J, 0, -1):
        if k < J:
            sums = sums[0::2] + sums[1::2]
        if k <= max_level:
            block = y.n >> k
            levels[k] = (sums[1::2] - sums[0::2]) / block
    return CoefficientField({k: levels[k] for k in sorted(levels)}, y.noise_sigma)


def haar_estimates_direct(y: SampledSignal, max_level: int) -> CoefficientField:
    """Per-index summation; reference for :func:`haar_estimates`."""
    levels = {}
    n = y.n
    for k in range(1, max_level + 1):
        block = n >> k
        est = np.empty(level_size(k))
        for j in range(level_size(k)):
            start = 2 * j * block
            left = y.values[start : start + block].sum()
            right = y.values[start + block : start + 2 * block].sum()
            est[j] = (right - left) / block
        levels[k] = est
    return CoefficientField(levels, y.noise_sigma)


def sample_function(
    f: Callable[[np.ndarray], np.ndarray], resolution: int, sigma: float = 0.0, seed=None
) -> SampledSignal:
    """Sample ``f`` at the ``2**resolution`` bin midpoints, adding discretised white noise."""
    n = 1 << resolution
    x = (np.arange(n) + 0.5) / n
    values = np.asarray(f(x), dtype=float) * np.ones(n)
    if sigma > 0:
        rng = np.random.default_rng(seed)
        values = values + sigma * math.sqrt(n) * rng.standard_normal(n)
    return SampledSignal(values, sigma)


def read_signal(path, sigma: float) -> SampledSignal:
    """Single-column numeric text, one sample per line; ``#`` starts a comment."""
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            text = line.split("#", 1)[0].strip()
            if not text:
                continue
            try:
                values.append(float(text))
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a number: {text!r}") from None
    return SampledSignal(np.array(values), sigma)
