"""Monte Carlo experiments behind the command line.

Every runner returns an :class:`ExperimentResult`; nothing here touches the
filesystem except through :func:`write_csv`.  Randomness comes from
``SeedSequence([seed, stream, ...])`` children, so outputs are a pure
function of the configuration and independent of the worker count.

Power sweeps have two engines producing the same per-level statistics:

``field``
    simulates every coefficient of levels ``1..max_level``.
``summary``
    simulates each level's statistic from its exact null law plus the one
    distinguished coordinate that may carry the spike.  The MAP maximum of
    ``n_h - 1`` null scores is drawn exactly through the minimum of
    uniforms; the Bayes sum of null scores is exact up to
    ``EXACT_BAYES_N`` terms and replaced by its stable limit beyond.  This
    is what makes levels up to 64 (``n_h = 2**63``) feasible.
"""

from __future__ import annotations

import csv
import io
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np

from .. import __version__, null_dists
from ..calibration import CalibrationCache, CalibrationEntry, Kind, calibrate
from ..gauss_num import log_score
from ..haar_model import haar_estimates, level_size, read_signal, sample_function
from ..null_dists import EULER_GAMMA, exp_sup_quantile
from ..priors import adaptive_weights, cross_entropy
from ..stat_tests import (
    TestReport,
    adaptive_map_test,
    bayes_z,
    combine_bayes,
    combine_map,
    critical_snr,
    log_bayes_average,
    map_level_values,
    multilevel_bayes_test,
    multilevel_map_test,
)
from .config import ConfigError, ExperimentConfig

__all__ = [
    "ExperimentResult",
    "EXACT_BAYES_N",
    "figure1_grid",
    "run_figure1",
    "run_figure2",
    "run_calibrate",
    "run_type1",
    "run_power_sweep",
    "run_test",
    "single_level_rejection_rate",
    "level_statistics",
    "write_csv",
]

EXACT_BAYES_N = 4096
MIN_EXCEEDANCES = 100
# memory cap (elements) for one block of simulated coefficients
_BLOCK = 4_000_000


@dataclass
class ExperimentResult:
    columns: list[str]
    rows: list[list]
    config: ExperimentConfig
    calibrations: list[CalibrationEntry] = field(default_factory=list)
    notes: list[tuple[str, str]] = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        i = self.columns.index(name)
        return np.array([r[i] for r in self.rows])

    def select(self, **match) -> list[dict]:
        out = []
        for r in self.rows:
            rec = dict(zip(self.columns, r))
            if all(rec[k] == v for k, v in match.items()):
                out.append(rec)
        return out

    def metadata(self) -> list[tuple[str, str]]:
        meta = [("version", __version__)]
        meta += [(f"config.{k}", v) for k, v in self.config.echo()]
        meta += [("calibration", ",".join(map(str, e.key)) + f",value={e.value!r}") for e in self.calibrations]
        meta += self.notes
        return meta


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(result: ExperimentResult, path=None) -> str:
    """Header row, fixed column order, ``#``-prefixed metadata lines first.

    Returns the text; writes it to ``path`` when given.
    """
    buf = io.StringIO()
    for key, val in result.metadata():
        buf.write(f"# {key}={val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(result.columns)
    for row in result.rows:
        writer.writerow([_fmt(v) for v in row])
    text = buf.getvalue()
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def _stream(seed: int, *tags: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, *tags]))


def _cache(config: ExperimentConfig) -> CalibrationCache | None:
    return CalibrationCache(config.cache) if config.cache else None


def _zeta_circ_entry(config: ExperimentConfig, seed: int) -> CalibrationEntry:
    return calibrate(
        Kind.ZETA_CIRC,
        config.truncation,
        config.alpha,
        config.calibration_reps,
        seed,
        _cache(config),
        config.workers,
    )


# -- figure 1 --------------------------------------------------------------


def figure1_grid(a: np.ndarray, b: np.ndarray, min_exceed: int = MIN_EXCEEDANCES) -> np.ndarray:
    """Points from 0 up to the last ``x`` with ``min_exceed`` exceedances in both samples.

    Linear spacing (step 0.5) up to 5 and 30 log-spaced points beyond.
    """
    # strictly above the (min_exceed + 1)-th largest value lie min_exceed points
    top = min(np.sort(a)[-min_exceed - 1], np.sort(b)[-min_exceed - 1])
    if top <= 0:
        return np.array([], dtype=float)
    lin = np.arange(0.0, min(top, 5.0) + 1e-12, 0.5)
    if top > 5.0:
        grid = np.concatenate([lin, np.geomspace(5.0, top, 30)[1:]])
    else:
        grid = lin
    return grid


def _log_tail(sample_sorted: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n = sample_sorted.size
    count = n - np.searchsorted(sample_sorted, x, side="right")
    p = count / n
    with np.errstate(divide="ignore"):
        logp = np.log(p)
        se = np.sqrt((1.0 - p) / (n * p))
    return count, logp, se


def run_figure1(config: ExperimentConfig) -> ExperimentResult:
    """Log-tail error ``Delta(x; n_h)`` of ``B_h - log n_h + gamma`` against ``zeta``.

    ``band`` is three joint standard errors of ``Delta`` (delta method on
    both empirical tails).
    """
    seed = config.require_seed()
    zeta = np.sort(
        null_dists.simulate_zeta(config.truncation, config.reps, [seed, 2], workers=config.workers)
    )
    rows = []
    for n_h in config.n_h_list:
        b = null_dists.simulate_B_null(n_h, config.reps, [seed, 1, n_h], config.workers)
        b = np.sort(b - math.log(n_h) + EULER_GAMMA)
        grid = figure1_grid(b, zeta)
        cb, lb, sb = _log_tail(b, grid)
        cz, lz, sz = _log_tail(zeta, grid)
        for i, x in enumerate(grid):
            joint = math.hypot(sb[i], sz[i])
            delta = lb[i] - lz[i]
            rows.append(
                [n_h, float(x), int(cb[i]), int(cz[i]), lb[i], lz[i], delta, joint, 3 * joint,
                 int(abs(delta) <= 3 * joint)]
            )
    columns = ["n_h", "x", "exceed_B", "exceed_zeta", "logtail_B", "logtail_zeta",
               "delta", "joint_se", "band", "within_band"]
    return ExperimentResult(columns, rows, config, notes=[("x_grid_rule", "0..5 step 0.5 then 30 log-spaced points to the last x with >=100 exceedances in both samples")])


# -- figure 2 --------------------------------------------------------------


def run_figure2(config: ExperimentConfig) -> ExperimentResult:
    """Exact and smooth adaptive penalties ``L``, ``L_tilde`` and ``Delta = L_tilde - L``."""
    rows = []
    for m in config.m_list:
        w = adaptive_weights(m, config.eps, config.k_max)
        delta = w.delta
        for i, k in enumerate(w.k):
            rows.append([m, int(k), w.psi[i], w.L[i], w.L_tilde[i], delta[i], delta[i] * w.psi[i]])
    return ExperimentResult(["m", "k", "psi", "L", "L_tilde", "delta", "delta_times_psi"], rows, config)


# -- calibration -------------------------------------------------------------


def run_calibrate(config: ExperimentConfig) -> ExperimentResult:
    seed = config.require_seed()
    n_h = config.n_h
    if config.kind == Kind.ZETA_CIRC.value and n_h is None:
        n_h = config.truncation
    entry = calibrate(config.kind, n_h, config.alpha, config.reps, seed, _cache(config), config.workers)
    columns = ["kind", "n_h", "alpha", "reps", "seed", "value", "mc_stderr"]
    row = [entry.kind.value, entry.n_h, entry.alpha, entry.reps, entry.seed, entry.value, entry.mc_stderr]
    return ExperimentResult(columns, [row], config, calibrations=[entry])


# -- per-level statistics ----------------------------------------------------


@dataclass
class LevelDraws:
    """Shared randomness of one sweep: spike location and per-level draws."""

    rho: np.ndarray  # spike level per replication
    tau: np.ndarray  # spike position per replication
    special: dict[int, np.ndarray]  # standard normal at the distinguished slot
    map_rest: dict[int, np.ndarray]  # log max score over the other n_h - 1 slots
    bayes_rest: dict[int, np.ndarray]  # sum of scores over the other n_h - 1 slots


def _bayes_rest_sum(rng: np.random.Generator, n: int, reps: int, truncation: int) -> np.ndarray:
    if n == 0:
        return np.zeros(reps)
    if n <= EXACT_BAYES_N:
        out = np.empty(reps)
        step = max(1, _BLOCK // n)
        for s in range(0, reps, step):
            u = 1.0 - rng.random((min(step, reps - s), n))
            out[s : s + u.shape[0]] = (np.reciprocal(u) - 1.0).sum(axis=1)
        return out
    zc = null_dists._zeta_circ_chunk(rng, reps, truncation, True)
    return n * (zc + math.log(n) + EULER_GAMMA - 1.0)


def draw_summary(
    seed: int, weights: np.ndarray, reps: int, need_bayes: bool, truncation: int
) -> LevelDraws:
    """Randomness for the summary engine; identical for every amplitude and test."""
    K = weights.size
    loc = _stream(seed, 0)
    rho = loc.choice(K, size=reps, p=weights) + 1
    tau = np.floor(loc.random(reps) * np.exp2(rho - 1)).astype(np.int64)
    special, map_rest, bayes_rest = {}, {}, {}
    for k in range(1, K + 1):
        rng = _stream(seed, 1, k)
        n_rest = level_size(k) - 1
        special[k] = rng.standard_normal(reps)
        if n_rest:
            map_rest[k] = null_dists.max_score_min_uniform(rng, n_rest, reps)
        else:
            map_rest[k] = np.full(reps, -np.inf)
        if need_bayes:
            bayes_rest[k] = _bayes_rest_sum(_stream(seed, 2, k), n_rest, reps, truncation)
    return LevelDraws(rho, tau, special, map_rest, bayes_rest)


def summary_statistics(
    draws: LevelDraws, amplitude: np.ndarray, need_bayes: bool
) -> tuple[np.ndarray, np.ndarray | None]:
    """``Z^M`` and ``Z^B`` with one row per level, spike of size ``amplitude`` at ``rho``."""
    K = len(draws.special)
    reps = draws.rho.size
    zm = np.empty((K, reps))
    zb = np.empty((K, reps)) if need_bayes else None
    for k in range(1, K + 1):
        log_n = (k - 1) * math.log(2.0)
        shift = np.where(draws.rho == k, amplitude, 0.0)
        ls = log_score(draws.special[k] - shift)
        zm[k - 1] = np.maximum(draws.map_rest[k], ls) - log_n
        if need_bayes:
            b = draws.bayes_rest[k] * math.exp(-log_n) + np.exp(np.minimum(ls - log_n, 700.0))
            zb[k - 1] = bayes_z(b, level_size(k))
    return zm, zb


def level_statistics(x: dict[int, np.ndarray], need_bayes: bool = True):
    """``Z^M`` and ``Z^B`` rows from standardised estimates ``x[k]`` of shape ``(reps, n_h)``."""
    levels = sorted(x)
    zm = np.stack([map_level_values(x[k])[0] for k in levels])
    zb = None
    if need_bayes:
        zb = np.stack(
            [bayes_z(np.exp(np.minimum(log_bayes_average(x[k]), 700.0)), x[k].shape[-1]) for k in levels]
        )
    return zm, zb


def field_statistics(
    seed: int, weights: np.ndarray, reps: int, amplitude_of_level: Callable, need_bayes: bool
):
    """Literal field simulation; returns ``(rho, zm, zb)``."""
    K = weights.size
    loc = _stream(seed, 0)
    rho = loc.choice(K, size=reps, p=weights) + 1
    tau = np.floor(loc.random(reps) * np.exp2(rho - 1)).astype(np.int64)
    amp = amplitude_of_level(rho)
    x = {}
    for k in range(1, K + 1):
        xi = _stream(seed, 3, k).standard_normal((reps, level_size(k)))
        hit = np.nonzero(rho == k)[0]
        xi[hit, tau[hit]] -= amp[hit]
        x[k] = xi
    zm, zb = level_statistics(x, need_bayes)
    return rho, zm, zb


# -- type I / power ------------------------------------------------------


def _snr_kind_spread(config: ExperimentConfig, prior) -> tuple[str, float]:
    if config.snr_rule == "R":
        return "R", prior.entropy
    if config.snr_rule == "R_cross":
        return "R", cross_entropy(prior, adaptive_weights(config.m, config.eps, prior.k_max))
    if config.prior == "omega_nu":
        return config.snr_rule, config.omega
    return config.snr_rule, math.exp(prior.entropy)


def _setup(config: ExperimentConfig):
    if config.engine == "summary":
        if config.prior == "omega_nu":
            prior = config.location_prior()
        else:
            prior = config.location_prior(config.max_level)
    else:
        prior = config.location_prior(config.effective_max_level)
    return prior


def _decide(test: str, zm, zb, prior, config: ExperimentConfig, crit: dict) -> np.ndarray:
    if test == "map":
        stat, _ = combine_map(zm, prior.log_weights())
        return stat >= crit["map"]
    if test == "adaptive":
        w = adaptive_weights(config.m, config.eps, max(prior.k_max, 1))
        stat, _ = combine_map(zm, w.log_weights()[: prior.k_max])
        return stat >= crit["adaptive"]
    stat = combine_bayes(zb, prior.weights)
    return stat >= crit["bayes"]


def _critical_values(config: ExperimentConfig, seed: int):
    crit, used = {}, []
    q_kappa = exp_sup_quantile(config.alpha)
    for t in config.tests:
        if t in ("map", "adaptive"):
            crit[t] = q_kappa
        else:
            entry = _zeta_circ_entry(config, seed)
            crit[t] = entry.value
            used.append(entry)
    return crit, used


def _simulate(config: ExperimentConfig, prior, amplitude_per_level: Callable[[np.ndarray], np.ndarray], offsets):
    """Yield ``(offset, rho, zm, zb)`` for each amplitude offset (common random numbers)."""
    seed = config.require_seed()
    need_bayes = "bayes" in config.tests
    if config.engine == "summary":
        draws = draw_summary(seed, prior.weights, config.reps, need_bayes, config.truncation)
        for off in offsets:
            amp = amplitude_per_level(draws.rho, off)
            zm, zb = summary_statistics(draws, amp, need_bayes)
            yield off, draws.rho, amp, zm, zb
    else:
        for off in offsets:
            captured = {}

            def amp_fn(rho, off=off):
                captured["amp"] = amplitude_per_level(rho, off)
                return captured["amp"]

            rho, zm, zb = field_statistics(seed, prior.weights, config.reps, amp_fn, need_bayes)
            yield off, rho, captured["amp"], zm, zb


def run_type1(config: ExperimentConfig) -> ExperimentResult:
    """Rejection rate of each configured test on the zero field."""
    seed = config.require_seed()
    prior = _setup(config)
    crit, used = _critical_values(config, seed)
    rows = []
    for _, _, _, zm, zb in _simulate(config, prior, lambda rho, off: np.zeros(rho.size), [0.0]):
        for t in config.tests:
            rej = _decide(t, zm, zb, prior, config, crit)
            rate = float(rej.mean())
            se = math.sqrt(max(rate * (1 - rate), 1e-300) / config.reps)
            rows.append([t, config.engine, prior.k_max, config.alpha, config.reps, rate, se, crit[t], rate - config.alpha])
    columns = ["test", "engine", "levels", "alpha", "reps", "rejection_rate", "se", "critical_value", "slack"]
    return ExperimentResult(columns, rows, config, used)


def run_power_sweep(config: ExperimentConfig) -> ExperimentResult:
    """Average type II error over the one-spike ensemble, by amplitude offset.

    A replication draws ``rho`` from the location prior and ``tau``
    uniformly, plants ``theta / sigma_h = -(sqrt(R_rho) + offset)`` there
    and zeros everywhere else.  ``R`` follows ``snr_rule`` with ``q`` the
    MAP threshold for every test, so all tests see the same amplitudes.
    """
    if not config.offsets:
        raise ConfigError("the amplitude grid (offsets) is empty")
    seed = config.require_seed()
    prior = _setup(config)
    crit, used = _critical_values(config, seed)
    q = exp_sup_quantile(config.alpha)
    kind, spread = _snr_kind_spread(config, prior)
    root = np.array([math.sqrt(critical_snr(kind, k, q, spread)) for k in range(1, prior.k_max + 1)])

    def amplitude(rho, off):
        return np.maximum(root[rho - 1] + off, 0.0)

    rows = []
    for off, rho, amp, zm, zb in _simulate(config, prior, amplitude, config.offsets):
        for t in config.tests:
            rej = _decide(t, zm, zb, prior, config, crit)
            beta = 1.0 - float(rej.mean())
            se = math.sqrt(beta * (1 - beta) / config.reps)
            rows.append([t, config.snr_rule, config.engine, float(off), beta, se, config.reps, crit[t], float(amp.mean())])
    columns = ["test", "snr_rule", "engine", "offset", "beta_bar", "se", "reps", "critical_value", "mean_amplitude"]
    return ExperimentResult(columns, rows, config, used, notes=[("planting", "zeros off the spike")])


def single_level_rejection_rate(
    theta_std: np.ndarray, crit: float, reps: int, seed, method: str = "bayes"
) -> float:
    """Rejection frequency of the single-level test at truth ``theta / sigma_h = theta_std``.

    ``crit`` is on the scale of the level average ``B`` (Bayes) or of
    ``max S / n_h`` (MAP).
    """
    theta_std = np.asarray(theta_std, dtype=float)
    n = theta_std.size
    rng = np.random.default_rng(seed)
    hits = 0
    step = max(1, _BLOCK // n)
    for s in range(0, reps, step):
        x = theta_std + rng.standard_normal((min(step, reps - s), n))
        if method == "bayes":
            stat = log_bayes_average(x)
        elif method == "map":
            stat = map_level_values(x)[0]
        else:
            raise ValueError(f"unknown method {method!r}")
        hits += int((stat >= math.log(crit)).sum())
    return hits / reps


# -- test pipeline -----------------------------------------------------------


def _generator(name: str, depth: float) -> Callable[[np.ndarray], np.ndarray]:
    if name == "linear":
        return lambda u: u
    if name == "dip":
        # slope 1 - depth / 0.2 on [0.4, 0.6], slope 1 elsewhere
        return lambda u: u - depth * np.clip((u - 0.4) / 0.2, 0.0, 1.0)
    if name == "constant":
        return lambda u: np.zeros_like(u)
    raise ConfigError(f"unknown generator {name!r}; choose linear, dip or constant")


DIP_INTERVAL = (0.4, 0.6)


def run_test(config: ExperimentConfig) -> TestReport:
    """Samples (file or generator) to coefficient estimates to one multi-level test."""
    if len(config.tests) != 1:
        raise ConfigError("the test pipeline runs exactly one test")
    if config.signal:
        signal = read_signal(config.signal, config.sigma)
    else:
        f = _generator(config.generator, config.dip_depth)
        signal = sample_function(f, config.resolution, config.sigma, config.require_seed())
    field_ = haar_estimates(signal, min(config.effective_max_level, signal.resolution))
    test = config.tests[0]
    if test == "adaptive":
        return adaptive_map_test(field_, adaptive_weights(config.m, config.eps, field_.max_level), config.alpha)
    prior = config.location_prior(field_.max_level)
    if test == "map":
        return multilevel_map_test(field_, prior, config.alpha)
    cache = _cache(config)
    calib = cache if cache is not None else _zeta_circ_entry(config, config.require_seed())
    return multilevel_bayes_test(field_, prior, config.alpha, calib)


RUNNERS = {
    "figure1": run_figure1,
    "figure2": run_figure2,
    "calibrate": run_calibrate,
    "type1": run_type1,
    "power_sweep": run_power_sweep,
}


def run(config: ExperimentConfig) -> ExperimentResult:
    runner = RUNNERS.get(config.experiment)
    if runner is None:
        raise ConfigError(f"{config.experiment!r} does not produce a table")
    return runner(config)
