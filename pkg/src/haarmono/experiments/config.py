"""Flat ``key=value`` experiment configuration."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

from ..priors import PriorOnLevels, adaptive_weights, omega_nu_prior, uniform_prior

EXPERIMENTS = ("figure1", "figure2", "type1", "power_sweep", "calibrate", "test")
TESTS = ("map", "bayes", "adaptive")
# R_cross: R with H replaced by the cross-entropy of the location prior and
# the adaptive weights, i.e. the penalty the adaptive test actually pays
SNR_RULES = ("R", "R_tilde", "R_plus", "R_cross")


class ConfigError(ValueError):
    pass


def _floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _opt_int(text: str):
    return None if text.strip().lower() in ("", "none") else int(text)


@dataclass
class ExperimentConfig:
    experiment: str = "test"
    seed: int | None = None
    reps: int = 1000
    alpha: float = 0.05
    # model
    sigma: float = 1.0
    resolution: int = 12
    max_level: int | None = None
    # priors: uniform (prior_levels), omega_nu (omega, nu) or adaptive (m, eps)
    prior: str = "omega_nu"
    prior_levels: int = 8
    omega: float = 64.0
    nu: str = "uniform"
    m: int = 1
    eps: float = 0.1
    # tests and sweeps
    test: str = "map"
    engine: str = "summary"
    snr_rule: str = "R"
    offsets: tuple[float, ...] = (-3.0, -2.0, -1.0, 0.0, 1.0, 2.0)
    n_h_list: tuple[int, ...] = (4, 1024)
    m_list: tuple[int, ...] = (1, 2)
    k_max: int = 1024
    truncation: int = 256
    calibration_reps: int = 400_000
    kind: str = "bayes_single"
    n_h: int | None = None
    workers: int = 1
    # io
    out: str | None = None
    cache: str | None = None
    signal: str | None = None
    generator: str = "linear"
    dip_depth: float = 0.5
    plot: bool = False

    _parsers = {
        "seed": _opt_int,
        "reps": int,
        "alpha": float,
        "sigma": float,
        "resolution": int,
        "max_level": _opt_int,
        "prior_levels": int,
        "omega": float,
        "m": int,
        "eps": float,
        "offsets": _floats,
        "n_h_list": _ints,
        "m_list": _ints,
        "k_max": int,
        "truncation": int,
        "calibration_reps": int,
        "n_h": _opt_int,
        "workers": int,
        "dip_depth": float,
        "plot": _bool,
    }

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        for name in self.tests:
            if name not in TESTS:
                raise ConfigError(f"unknown test {name!r}; choose from {TESTS}")
        if self.engine not in ("summary", "field"):
            raise ConfigError(f"unknown engine {self.engine!r}")
        if self.snr_rule not in SNR_RULES:
            raise ConfigError(f"unknown snr_rule {self.snr_rule!r}")
        if self.prior not in ("uniform", "omega_nu"):
            raise ConfigError(f"unknown prior family {self.prior!r}")

    @property
    def tests(self) -> tuple[str, ...]:
        """``test`` may list several tests, comma separated, for sweeps."""
        return tuple(t.strip() for t in self.test.split(",") if t.strip())

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in dataclasses.fields(cls)]

    @classmethod
    def parse_value(cls, key: str, text: str):
        if key not in cls.field_names():
            raise ConfigError(f"unknown config key {key!r}")
        try:
            return cls._parsers.get(key, str)(text.strip())
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {text!r} ({exc})") from None

    @classmethod
    def from_sources(cls, path=None, overrides: dict | None = None) -> ExperimentConfig:
        """Config file first, then explicit overrides (already typed or raw strings)."""
        values = {}
        if path is not None:
            values.update(read_config_file(path))
        for key, val in (overrides or {}).items():
            if val is None:
                continue
            values[key] = cls.parse_value(key, val) if isinstance(val, str) else val
        return cls(**values)

    def require_seed(self) -> int:
        if self.seed is None:
            raise ConfigError("a seed is mandatory (--seed or seed= in the config)")
        return self.seed

    @property
    def effective_max_level(self) -> int:
        return self.max_level if self.max_level is not None else max(self.resolution - 2, 1)

    def location_prior(self, k_max: int | None = None) -> PriorOnLevels:
        if self.prior == "uniform":
            prior = uniform_prior(self.prior_levels)
        else:
            prior = omega_nu_prior(self.omega, self.nu)
        return prior if k_max is None else prior.truncate(k_max)

    def adaptive(self, k_max: int):
        return adaptive_weights(self.m, self.eps, k_max)

    def echo(self) -> list[tuple[str, str]]:
        out = []
        for name in self.field_names():
            val = getattr(self, name)
            if isinstance(val, tuple):
                val = ",".join(repr(v) if isinstance(v, float) else str(v) for v in val)
            out.append((name, str(val)))
        return out


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        text = line.split("#", 1)[0].strip()
        if not text:
            continue
        if "=" not in text:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, val = (part.strip() for part in text.split("=", 1))
        values[key] = ExperimentConfig.parse_value(key, val)
    return values
