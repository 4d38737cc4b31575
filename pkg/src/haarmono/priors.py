"""Prior weights over dyadic levels.

Two families: ``pi(k) ∝ nu(k / omega)`` for a density ``nu`` on the positive
half-line and bandwidth ``omega > 1``, and prior-free weights built from
iterated logarithms,

    Pi(k) = psi_m(k)**-eps - psi_m(k + 1)**-eps,

whose sum over all ``k >= 1`` telescopes to ``psi_m(1)**-eps = 1``.

Requirements on a user ``nu`` (finite entropy, ``∫ nu(x) log(1 + x) dx <
inf``, continuity, boundedness) cannot be checked numerically and are the
caller's responsibility.
"""

from __future__ import annotations

import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

__all__ = [
    "NU_DENSITIES",
    "PriorOnLevels",
    "AdaptiveWeights",
    "omega_nu_prior",
    "uniform_prior",
    "geometric_prior",
    "uncertainty_condition_diagnostic",
    "iterated_log",
    "adaptive_weights",
    "cross_entropy",
]

TRUNCATION_TOL = 1e-9


def _uniform(x):
    x = np.asarray(x, dtype=float)
    return ((x >= 0) & (x <= 1)).astype(float)


def _exponential(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, np.exp(-x), 0.0)


def _half_normal(x):
    x = np.asarray(x, dtype=float)
    return np.where(x >= 0, math.sqrt(2 / math.pi) * np.exp(-0.5 * x * x), 0.0)


NU_DENSITIES: dict[str, Callable] = {
    "uniform": _uniform,
    "exponential": _exponential,
    "halfnormal": _half_normal,
}
# support upper ends, used to pick a default k_max
_NU_REACH = {"uniform": 1.0, "exponential": 25.0, "halfnormal": 7.0}


def _entropy(w: np.ndarray) -> float:
    w = w[w > 0]
    return float(-(w * np.log(w)).sum())


@dataclass(frozen=True)
class PriorOnLevels:
    """Probability weights on levels ``1..k_max`` (``levels[i] = i + 1``).

    ``discarded_mass`` is the fraction removed by truncation before
    renormalisation.
    """

    weights: np.ndarray
    discarded_mass: float = 0.0
    entropy: float = field(init=False)
    log_entropy: float = field(init=False)

    def __post_init__(self):
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("weights must be a nonempty vector")
        if np.any(w < 0):
            raise ValueError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValueError(f"weights sum to {w.sum()!r}, not 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        h = _entropy(w)
        object.__setattr__(self, "entropy", h)
        object.__setattr__(self, "log_entropy", math.log(h) if h > 0 else -math.inf)

    @property
    def levels(self) -> np.ndarray:
        return np.arange(1, self.weights.size + 1)

    @property
    def k_max(self) -> int:
        return self.weights.size

    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def truncate(self, max_level: int) -> PriorOnLevels:
        """Restrict to levels ``<= max_level`` and renormalise."""
        if max_level >= self.k_max:
            return self
        kept = self.weights[:max_level].sum()
        if kept <= 0:
            raise ValueError(f"prior has no mass on levels 1..{max_level}")
        lost = 1.0 - kept
        total_lost = float(1.0 - (1.0 - self.discarded_mass) * (1.0 - lost))
        w = self.weights[:max_level] / kept
        return PriorOnLevels(w / w.sum(), total_lost)


def omega_nu_prior(omega: float, nu="uniform", k_max: int | None = None) -> PriorOnLevels:
    """``pi(k) = nu(k / omega) / sum_j nu(j / omega)`` on ``k = 1..k_max``.

    ``nu`` is a name from :data:`NU_DENSITIES` or a vectorised density.
    Raises if more than ``1e-9`` of the mass lies beyond ``k_max``.
    """
    if omega <= 1:
        raise ValueError(f"omega must exceed 1, got {omega}")
    name = nu if isinstance(nu, str) else None
    density = NU_DENSITIES[nu] if name else nu
    if k_max is None:
        reach = _NU_REACH.get(name, 50.0)
        k_max = int(math.floor(reach * omega)) if name == "uniform" else int(math.ceil(reach * omega))
    k = np.arange(1, k_max + 1)
    raw = np.asarray(density(k / omega), dtype=float)
    head = raw.sum()
    if head <= 0:
        raise ValueError("nu puts no mass on the grid k / omega")
    # remaining grid mass ~ omega * integral of nu beyond k_max / omega
    tail, _ = integrate.quad(density, (k_max + 0.5) / omega, np.inf, limit=200)
    tail_frac = omega * tail / (head + omega * tail)
    if tail_frac > TRUNCATION_TOL:
        raise ValueError(
            f"k_max = {k_max} drops a fraction {tail_frac:.2e} of the prior mass "
            f"(limit {TRUNCATION_TOL:g}); increase k_max"
        )
    w = raw / head
    return PriorOnLevels(w / w.sum())


def uniform_prior(n_levels: int) -> PriorOnLevels:
    return PriorOnLevels(np.full(n_levels, 1.0 / n_levels))


def geometric_prior(ratio: float, n_levels: int) -> PriorOnLevels:
    """``pi(k) ∝ ratio**k`` on ``1..n_levels``."""
    w = ratio ** np.arange(1, n_levels + 1, dtype=float)
    w /= w.sum()
    return PriorOnLevels(w / w.sum())


def uncertainty_condition_diagnostic(prior: PriorOnLevels) -> float:
    """``(1 / log H) * sum_k pi_k |H - log(1/pi_k)|``; small values mean spread-out priors."""
    h = prior.entropy
    if h <= 1:
        raise ValueError(f"diagnostic needs entropy > 1, got {h:.4g}")
    w = prior.weights[prior.weights > 0]
    return float((w * np.abs(h + np.log(w))).sum() / math.log(h))


def iterated_log(m: int, x):
    """``psi_m(x)`` where ``psi_0(x) = 1 + log x`` and ``psi_l = psi_0(psi_{l-1})``."""
    if m < 0:
        raise ValueError("m must be >= 0")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 1):
        raise ValueError("iterated_log needs x >= 1")
    out = xa
    for _ in range(m + 1):
        out = 1.0 + np.log(out)
    return float(out) if out.ndim == 0 else out


def _psi_and_step(m: int, k: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
    """``[psi_0(k), ..., psi_m(k)]`` and ``psi_m(k + 1) - psi_m(k)`` without cancellation."""
    psis = []
    val = k.astype(float)
    step = np.ones_like(val)  # (k + 1) - k
    for _ in range(m + 1):
        step = np.log1p(step / val)
        val = 1.0 + np.log(val)
        psis.append(val)
    return psis, step


@dataclass(frozen=True)
class AdaptiveWeights:
    """Iterated-logarithm level weights on ``k = 1..k_max``.

    ``L`` is the exact penalty ``-log(Pi / eps)``, ``L_tilde`` its smooth
    approximation and ``delta = L_tilde - L``.  ``tail_mass`` is the part
    of ``Pi`` beyond ``k_max`` (``psi_m(k_max + 1)**-eps``).
    """

    m: int
    eps: float
    k: np.ndarray
    psi: np.ndarray
    L: np.ndarray
    L_tilde: np.ndarray
    pi: np.ndarray
    tail_mass: float

    @property
    def delta(self) -> np.ndarray:
        return self.L_tilde - self.L

    @property
    def k_max(self) -> int:
        return int(self.k[-1])

    @property
    def telescoping_total(self) -> float:
        """``sum_k exp(-L(k))`` over all ``k >= 1``: partial sum plus analytic tail."""
        return float(np.exp(-self.L).sum() + self.tail_mass / self.eps)

    def entropy(self) -> float:
        return _entropy(self.pi)

    def log_weights(self) -> np.ndarray:
        return np.log(self.pi)


def adaptive_weights(m: int = 1, eps: float = 0.1, k_max: int = 64) -> AdaptiveWeights:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if m < 0 or k_max < 1:
        raise ValueError("need m >= 0 and k_max >= 1")
    k = np.arange(1, k_max + 1)
    psis, step = _psi_and_step(m, k)
    psi_m = psis[-1]
    # psi^-eps - (psi + step)^-eps = psi^-eps * (1 - (1 + step/psi)^-eps)
    pi = psi_m**-eps * -np.expm1(-eps * np.log1p(step / psi_m))
    L = -np.log(pi / eps)
    L_tilde = np.log(k) + sum(np.log(p) for p in psis[:-1]) + (1 + eps) * np.log(psi_m)
    tail = float(iterated_log(m, k_max + 1) ** -eps)
    return AdaptiveWeights(m, eps, k, psi_m, L, L_tilde, pi, tail)


def cross_entropy(prior: PriorOnLevels, weights: AdaptiveWeights) -> float:
    """``sum_k pi_k log(1 / Pi_k)`` over the prior's support."""
    if weights.k_max < prior.k_max:
        raise ValueError("adaptive weights must cover the prior's support")
    w = prior.weights
    mask = w > 0
    return float(-(w[mask] * np.log(weights.pi[: w.size][mask])).sum())
