"""Null-distribution simulators.

Everything is driven by the distributional identity ``Phi(xi) ~ Uniform``:
the score of a null coefficient is ``1/U - 1``.  Level averages of scores
approach a totally skewed 1-stable law ``zeta``, represented through the
series ``zeta_circ = sum_k (1/E_k - 1/k)`` over partial sums ``E_k`` of unit
exponentials, with ``zeta = zeta_circ + 2 gamma - 1``.

Sampling is chunked.  Chunk ``i`` draws from ``SeedSequence(seed).spawn``'s
``i``-th child, so results depend only on ``(seed, reps)`` and never on the
number of worker threads.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

__all__ = [
    "EULER_GAMMA",
    "StableParams",
    "ZETA_PARAMS",
    "chunked_draws",
    "simulate_B_null",
    "simulate_map_null",
    "simulate_zeta_circ",
    "simulate_zeta",
    "zeta_circ_self_convergence",
    "zeta_circ_tail_prob",
    "zeta_circ_extreme_quantile",
    "stable_cf",
    "empirical_cf",
    "pyke_order_statistics",
    "max_score_min_uniform",
    "exp_sup_quantile",
    "map_single_exact_quantile",
    "sup_shifted_log_exponentials",
]

EULER_GAMMA = float(np.euler_gamma)
# elements per chunk; keeps the working set near 16 MB
_CHUNK_ELEMENTS = 2_000_000
DEFAULT_TRUNCATION = 256


@dataclass(frozen=True)
class StableParams:
    mu: float = 0.0
    c: float = math.pi / 2
    beta: float = 1.0

    def __post_init__(self):
        if self.c < 0:
            raise ValueError("scale c must be nonnegative")
        if not -1.0 <= self.beta <= 1.0:
            raise ValueError("beta must lie in [-1, 1]")


ZETA_PARAMS = StableParams(0.0, math.pi / 2, 1.0)


def stable_cf(params: StableParams, t):
    """Characteristic function of a 1-stable law (``t = 0`` gives 1)."""
    t = np.asarray(t, dtype=float)
    abst = np.abs(t)
    with np.errstate(divide="ignore", invalid="ignore"):
        tlogt = np.where(abst > 0, t * np.log(np.where(abst > 0, abst, 1.0)), 0.0)
    expo = (
        1j * params.mu * t
        - np.abs(params.c * t)
        - 1j * (2.0 * params.beta * abs(params.c) / math.pi) * tlogt
    )
    out = np.exp(expo)
    return complex(out) if out.ndim == 0 else out


def empirical_cf(sample: np.ndarray, t) -> np.ndarray:
    t = np.atleast_1d(np.asarray(t, dtype=float))
    sample = np.asarray(sample, dtype=float)
    return np.array([np.mean(np.exp(1j * tt * sample)) for tt in t])


def chunked_draws(
    draw: Callable[[np.random.Generator, int], np.ndarray],
    reps: int,
    seed,
    chunk: int,
    workers: int = 1,
) -> np.ndarray:
    """Concatenate ``draw(rng_i, size_i)`` over fixed-size chunks."""
    if reps < 1:
        raise ValueError("reps must be >= 1")
    chunk = max(1, int(chunk))
    sizes = [min(chunk, reps - start) for start in range(0, reps, chunk)]
    children = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(i):
        return draw(np.random.default_rng(children[i]), sizes[i])

    if workers > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, range(len(sizes))))
    else:
        parts = [run(i) for i in range(len(sizes))]
    return np.concatenate(parts)


def simulate_B_null(n_h: int, reps: int, seed, workers: int = 1) -> np.ndarray:
    """Draws of the level average ``(1/n_h) sum_k S(xi_k)`` under the null.

    Uses ``S(xi) = 1/U - 1`` with ``U`` uniform on ``(0, 1]``.
    """
    if n_h < 1:
        raise ValueError("n_h must be >= 1")

    def draw(rng, m):
        u = 1.0 - rng.random((m, n_h))  # (0, 1]
        return np.reciprocal(u).mean(axis=1) - 1.0

    return chunked_draws(draw, reps, seed, max(1, _CHUNK_ELEMENTS // n_h), workers)


def max_score_min_uniform(rng: np.random.Generator, n, size) -> np.ndarray:
    """``log max_{k<=n} S(xi_k)`` sampled exactly through the minimum of ``n`` uniforms.

    ``U_min = 1 - V**(1/n)`` is computed as ``-expm1(log(V) / n)`` so that
    ``n`` up to ``2**63`` keeps full precision.  ``n`` may be an array
    broadcast against ``size``.
    """
    v = 1.0 - rng.random(size)
    u_min = -np.expm1(np.log(v) / np.asarray(n, dtype=float))
    u_min = np.maximum(u_min, np.finfo(float).tiny)
    return np.log1p(-u_min) - np.log(u_min)


def simulate_map_null(n_h: int, reps: int, seed, workers: int = 1) -> np.ndarray:
    """Draws of ``max_k S(xi_k) / n_h`` (exact in distribution)."""
    if n_h < 1:
        raise ValueError("n_h must be >= 1")

    def draw(rng, m):
        return np.exp(max_score_min_uniform(rng, n_h, m) - math.log(n_h))

    return chunked_draws(draw, reps, seed, _CHUNK_ELEMENTS, workers)


def _zeta_circ_chunk(rng, m, truncation, tail):
    e = rng.standard_exponential((m, truncation))
    np.cumsum(e, axis=1, out=e)
    last = e[:, -1].copy()
    np.reciprocal(e, out=e)
    harmonic = special.digamma(truncation + 1) + EULER_GAMMA
    out = e.sum(axis=1) - harmonic
    if tail:
        # remainder sum_{k>K}(1/E_k - 1/k) given E_K = a: its mean is
        # digamma(K+1) - digamma(a+1) + 1/(2a) up to O(1/K**2) and its
        # fluctuation, a weighted sum of later exponentials, is close to N(0, 1/a)
        out += (
            special.digamma(truncation + 1)
            - special.digamma(last + 1.0)
            + 0.5 / last
            + rng.standard_normal(m) / np.sqrt(last)
        )
    return out


def simulate_zeta_circ(
    truncation: int = DEFAULT_TRUNCATION,
    reps: int = 1,
    seed=None,
    tail: bool = True,
    workers: int = 1,
) -> np.ndarray:
    """Draws of ``zeta_circ = sum_{k>=1} (1/E_k - 1/k)``.

    The first ``truncation`` terms are simulated exactly.  With ``tail=True``
    the remainder is added from its conditional mean and Gaussian
    fluctuation given ``E_K``; the residual error is then ``O(1/K)`` instead
    of the ``O(1/sqrt(K))`` of plain truncation, which is what ``tail=False``
    returns.
    """
    if truncation < 10:
        raise ValueError("truncation must be >= 10")
    chunk = max(1, _CHUNK_ELEMENTS // truncation)
    return chunked_draws(
        lambda rng, m: _zeta_circ_chunk(rng, m, truncation, tail), reps, seed, chunk, workers
    )


def simulate_zeta(truncation: int = DEFAULT_TRUNCATION, reps: int = 1, seed=None, **kw):
    """Draws of the 1-stable limit ``zeta = zeta_circ + 2 gamma - 1``."""
    return simulate_zeta_circ(truncation, reps, seed, **kw) + 2 * EULER_GAMMA - 1


def zeta_circ_self_convergence(
    truncation: int, reps: int, seed, probs=(0.5, 0.9, 0.95, 0.99), ratio: int = 100
) -> dict:
    """Quantile drift between truncations ``K / ratio`` and ``K``.

    Both truncations are computed from the same exponential draws (the
    coarse sum uses the first ``K / ratio`` of them), so the drift measures
    truncation error rather than Monte Carlo noise.
    """
    coarse_k = max(10, truncation // ratio)
    if truncation <= coarse_k:
        raise ValueError("truncation must exceed the coarse truncation")

    def draw(rng, m):
        e = np.cumsum(rng.standard_exponential((m, truncation)), axis=1)
        out = np.empty((m, 2))
        for col, k in enumerate((coarse_k, truncation)):
            head = (1.0 / e[:, :k]).sum(axis=1) - special.digamma(k + 1) - EULER_GAMMA
            last = e[:, k - 1]
            # deterministic part of the remainder only: the Gaussian term would
            # add independent noise to the two columns
            out[:, col] = head + special.digamma(k + 1) - special.digamma(last + 1.0) + 0.5 / last
        return out

    both = chunked_draws(draw, reps, seed, max(1, _CHUNK_ELEMENTS // truncation))
    qc = np.quantile(both[:, 0], probs)
    qf = np.quantile(both[:, 1], probs)
    return {
        "truncation": truncation,
        "coarse_truncation": coarse_k,
        "probs": tuple(probs),
        "drift": tuple(float(v) for v in np.abs(qf - qc)),
    }


class _ZetaCircTail:
    """Conditional Monte Carlo for ``P(zeta_circ > x)`` at large ``x``.

    Write ``zeta_circ = g(E_1)`` with the later gaps held fixed; ``g``
    decreases in ``E_1``, so given the gaps the event is ``{E_1 < e*}`` and
    has probability ``1 - exp(-e*)``.  Averaging over gap draws keeps the
    relative error small even for probabilities near ``1e-7``.  The gaps are
    drawn once, so repeated calls share random numbers.
    """

    def __init__(self, reps: int, seed, truncation: int = DEFAULT_TRUNCATION):
        rng = np.random.default_rng(seed)
        gaps = np.cumsum(rng.standard_exponential((reps, truncation - 1)), axis=1)
        self.gaps = gaps
        self.fluct = rng.standard_normal(reps)
        self.k = np.arange(2, truncation + 1)
        self.tail_const = special.digamma(truncation + 1)

    def _rest(self, e1: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Sum of all terms after the first, and its derivative in ``E_1``."""
        inv = 1.0 / (e1[:, None] + self.gaps)
        head = (inv - 1.0 / self.k).sum(axis=1)
        dhead = -(inv * inv).sum(axis=1)
        a = e1 + self.gaps[:, -1]
        rest = head + self.tail_const - special.digamma(a + 1.0) + 0.5 / a + self.fluct / np.sqrt(a)
        drest = dhead - special.polygamma(1, a + 1.0) - 0.5 / a**2 - 0.5 * self.fluct / a**1.5
        return rest, drest

    def probs(self, x: float) -> np.ndarray:
        # Newton in u = 1/E_1 on u - 1 + rest(1/u) = x; the slope is >= 1 (up to
        # the tiny Gaussian tail term), so iterates stay well behaved
        m = self.gaps.shape[0]
        u = np.full(m, x + 1.0)
        for _ in range(50):
            rest, drest = self._rest(1.0 / u)
            resid = u - 1.0 + rest - x
            slope = np.maximum(1.0 - drest / (u * u), 1.0)
            u_new = np.maximum(u - resid / slope, 1e-12)
            done = np.max(np.abs(u_new - u) / u_new) < 1e-12
            u = u_new
            if done:
                break
        return -np.expm1(-1.0 / u)

    def prob(self, x: float) -> tuple[float, float]:
        p = self.probs(x)
        return float(p.mean()), float(p.std(ddof=1) / math.sqrt(p.size))


def zeta_circ_tail_prob(
    x: float, reps: int, seed, truncation: int = DEFAULT_TRUNCATION
) -> tuple[float, float]:
    """``(estimate, stderr)`` of ``P(zeta_circ > x)``; intended for ``x`` beyond ~20."""
    return _ZetaCircTail(reps, seed, truncation).prob(x)


def zeta_circ_extreme_quantile(
    alpha: float, reps: int = 20_000, seed=0, truncation: int = DEFAULT_TRUNCATION
) -> tuple[float, float]:
    """``(1 - alpha)``-quantile of ``zeta_circ`` for tiny ``alpha``.

    Solves ``P(zeta_circ > x) = alpha`` on a log scale with the conditional
    tail estimator.  The stderr is propagated through the local ``1/x``
    slope of the tail.
    """
    if not 0 < alpha < 0.01:
        raise ValueError("extreme route is meant for alpha < 0.01")
    tail = _ZetaCircTail(reps, seed, truncation)
    lx = optimize.brentq(
        lambda v: math.log(tail.prob(math.exp(v))[0]) - math.log(alpha),
        math.log(0.2 / alpha),
        math.log(5.0 / alpha),
        xtol=1e-10,
    )
    q = math.exp(lx)
    p, se = tail.prob(q)
    return q, q * se / p


def pyke_order_statistics(n: int, seed) -> np.ndarray:
    """Uniform order statistics as ``E_k / E_{n+1}``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    e = np.cumsum(rng.standard_exponential(n + 1))
    return e[:n] / e[n]


def exp_sup_quantile(alpha: float) -> float:
    """``q = -log(log(1/(1 - alpha)))``, the upper ``alpha`` point of ``log(1/kappa)``."""
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    return -math.log(-math.log1p(-alpha))


def map_single_exact_quantile(n_h: int, alpha: float) -> float:
    """Exact upper ``alpha`` point of ``max_k S(xi_k) / n_h``.

    ``P(max S > s) = 1 - (1 - 1/(1 + s))**n_h`` because ``S > s`` iff
    ``U < 1/(1 + s)``.
    """
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    # 1 - (1 - alpha)**(1/n)
    u = -math.expm1(math.log1p(-alpha) / n_h)
    return (1.0 / u - 1.0) / n_h


def sup_shifted_log_exponentials(penalties, reps: int, seed, workers: int = 1) -> np.ndarray:
    """Draws of ``max_h [log(1/kappa_h) - U_h] - log sum_h exp(-U_h)``.

    ``kappa_h`` are independent standard exponentials.  The result has the
    law of ``log(1/kappa)`` whatever the penalties ``U_h``.
    """
    u = np.asarray(penalties, dtype=float)
    if u.ndim != 1 or u.size == 0:
        raise ValueError("penalties must be a nonempty vector")
    k_u = float(special.logsumexp(-u))

    def draw(rng, m):
        kappa = rng.standard_exponential((m, u.size))
        return (-np.log(kappa) - u).max(axis=1) - k_u

    return chunked_draws(draw, reps, seed, max(1, _CHUNK_ELEMENTS // u.size), workers)
