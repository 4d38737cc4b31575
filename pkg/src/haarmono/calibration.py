"""Critical values for the single-level and multi-level tests, plus their cache.

Cache format: one record per line, comma separated, in the fixed column order
``kind,n_h,alpha,reps,seed,value,mc_stderr``.  Lines starting with ``#`` are
comments.  For ``zeta_circ`` the ``n_h`` column carries the series truncation
and for ``exp_sup`` it is 0.  Appends hold an exclusive ``flock`` and write
whole lines; readers skip a trailing line without newline.
"""

from __future__ import annotations

import fcntl
import math
import os
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import null_dists
from .null_dists import EULER_GAMMA

__all__ = [
    "Kind",
    "CalibrationEntry",
    "CalibrationCache",
    "CalibrationMissing",
    "EXTREME_ALPHA",
    "calibrate",
    "bootstrap_quantile_stderr",
]

EXTREME_ALPHA = 1e-4
BOOTSTRAP_RESAMPLES = 200
CACHE_COLUMNS = ("kind", "n_h", "alpha", "reps", "seed", "value", "mc_stderr")


class Kind(str, Enum):
    BAYES_SINGLE = "bayes_single"
    MAP_SINGLE = "map_single"
    ZETA_CIRC = "zeta_circ"
    EXP_SUP = "exp_sup"


class CalibrationMissing(LookupError):
    """No cached critical value for the requested key."""

    def __init__(self, kind, n_h, alpha, cache_path=None):
        self.kind, self.n_h, self.alpha = Kind(kind), n_h, alpha
        where = f" --cache {cache_path}" if cache_path else ""
        super().__init__(
            f"no calibration for kind={self.kind.value} n_h={n_h} alpha={alpha!r}; "
            f"generate it with: haarmono calibrate --kind {self.kind.value} --n-h {n_h} "
            f"--alpha {alpha!r}{where}"
        )


@dataclass(frozen=True)
class CalibrationEntry:
    kind: Kind
    n_h: int
    alpha: float
    value: float
    reps: int
    seed: int
    mc_stderr: float

    @property
    def key(self) -> tuple:
        return (self.kind.value, self.n_h, repr(float(self.alpha)), self.reps, self.seed)

    def to_line(self) -> str:
        return ",".join(
            [
                self.kind.value,
                str(self.n_h),
                repr(float(self.alpha)),
                str(self.reps),
                str(self.seed),
                repr(float(self.value)),
                repr(float(self.mc_stderr)),
            ]
        )

    @classmethod
    def from_line(cls, line: str) -> CalibrationEntry:
        parts = line.strip().split(",")
        if len(parts) != len(CACHE_COLUMNS):
            raise ValueError(f"malformed calibration record: {line!r}")
        kind, n_h, alpha, reps, seed, value, stderr = parts
        return cls(
            Kind(kind), int(n_h), float(alpha), float(value), int(reps), int(seed), float(stderr)
        )


def bootstrap_quantile_stderr(
    sample: np.ndarray, prob: float, resamples: int = BOOTSTRAP_RESAMPLES, seed=0
) -> float:
    rng = np.random.default_rng(seed)
    n = sample.size
    qs = np.empty(resamples)
    for i in range(resamples):
        qs[i] = np.quantile(sample[rng.integers(0, n, n)], prob)
    return float(qs.std(ddof=1))


def _null_sample(kind: Kind, n_h: int, reps: int, seed, workers: int) -> np.ndarray:
    if kind is Kind.BAYES_SINGLE:
        return null_dists.simulate_B_null(n_h, reps, seed, workers)
    if kind is Kind.MAP_SINGLE:
        return null_dists.simulate_map_null(n_h, reps, seed, workers)
    if kind is Kind.ZETA_CIRC:
        return null_dists.simulate_zeta_circ(n_h, reps, seed, workers=workers)
    raise ValueError(f"{kind} has no Monte Carlo sampler")


def calibrate(
    kind,
    n_h: int | None,
    alpha: float,
    reps: int,
    seed: int,
    cache: CalibrationCache | None = None,
    workers: int = 1,
) -> CalibrationEntry:
    """Upper ``alpha`` critical value of a null statistic.

    ``bayes_single`` and ``map_single`` need the level size ``n_h``;
    ``zeta_circ`` reads ``n_h`` as the series truncation (default when
    ``None``).  For ``alpha < 1e-4`` plain Monte Carlo is replaced by the
    conditional tail estimator of ``zeta_circ`` (Bayes, shifted by
    ``log n_h + gamma - 1``) or the exact law of the maximum (MAP).
    An existing cache entry with the identical key is reused.
    """
    kind = Kind(kind)
    if not 0 < alpha < 1:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")
    if kind is Kind.EXP_SUP:
        n_h = 0
    elif kind is Kind.ZETA_CIRC:
        n_h = null_dists.DEFAULT_TRUNCATION if n_h is None else int(n_h)
    elif n_h is None or n_h < 1:
        raise ValueError(f"{kind.value} needs n_h >= 1")

    probe = CalibrationEntry(kind, int(n_h), float(alpha), math.nan, int(reps), int(seed), 0.0)
    if cache is not None:
        hit = cache.get_exact(probe.key)
        if hit is not None:
            return hit

    if kind is Kind.EXP_SUP:
        value, stderr = null_dists.exp_sup_quantile(alpha), 0.0
    elif alpha < EXTREME_ALPHA:
        if kind is Kind.MAP_SINGLE:
            value, stderr = null_dists.map_single_exact_quantile(n_h, alpha), 0.0
        else:
            truncation = n_h if kind is Kind.ZETA_CIRC else null_dists.DEFAULT_TRUNCATION
            value, stderr = null_dists.zeta_circ_extreme_quantile(alpha, reps, seed, truncation)
            if kind is Kind.BAYES_SINGLE:
                value += math.log(n_h) + EULER_GAMMA - 1.0
    else:
        if reps * alpha < 100:
            raise ValueError(
                f"reps * alpha = {reps * alpha:g} < 100: the empirical quantile is not "
                f"estimable; raise reps to {math.ceil(100 / alpha)} or use alpha < "
                f"{EXTREME_ALPHA:g}, which switches to the zeta_circ tail / exact "
                f"exponential-law route"
            )
        sample = _null_sample(kind, n_h, reps, seed, workers)
        value = float(np.quantile(sample, 1.0 - alpha))
        stderr = bootstrap_quantile_stderr(sample, 1.0 - alpha, seed=seed)

    entry = CalibrationEntry(kind, int(n_h), float(alpha), float(value), int(reps), int(seed), stderr)
    if cache is not None:
        cache.append(entry)
    return entry


class CalibrationCache:
    """Append-only critical-value table keyed by every calibration parameter."""

    def __init__(self, path):
        self.path = Path(path)

    def entries(self) -> list[CalibrationEntry]:
        if not self.path.exists():
            return []
        text = self.path.read_text()
        out = []
        for line in text.splitlines(keepends=True):
            if not line.endswith("\n") or not line.strip() or line.startswith("#"):
                continue
            out.append(CalibrationEntry.from_line(line))
        return out

    def get_exact(self, key: tuple) -> CalibrationEntry | None:
        for entry in self.entries():
            if entry.key == key:
                return entry
        return None

    def lookup(self, kind, n_h: int, alpha: float) -> CalibrationEntry:
        """Most replicated entry for ``(kind, n_h, alpha)``."""
        kind = Kind(kind)
        if kind is Kind.EXP_SUP:
            n_h = 0
        matches = [
            e
            for e in self.entries()
            if e.kind is kind and e.n_h == n_h and repr(float(e.alpha)) == repr(float(alpha))
        ]
        if not matches:
            raise CalibrationMissing(kind, n_h, alpha, self.path)
        return max(matches, key=lambda e: e.reps)

    def append(self, entry: CalibrationEntry) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a") as fh:
            fcntl.flock(fh, fcntl.LOCK_EX)
            try:
                if fh.tell() == 0:
                    fh.write("# " + ",".join(CACHE_COLUMNS) + "\n")
                fh.write(entry.to_line() + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            finally:
                fcntl.flock(fh, fcntl.LOCK_UN)
