"""``haarmono`` command line.

Exit codes: 0 success (``test``: H0 retained), 10 ``test`` rejected H0,
11 bad input or configuration, 12 missing calibration, 13 other failure.
"""

from __future__ import annotations

import argparse
import sys

from ..calibration import CalibrationMissing
from .config import ConfigError, ExperimentConfig
from .harness import run, run_test, write_csv

EXIT_OK = 0
EXIT_REJECT = 10
EXIT_INPUT = 11
EXIT_CALIBRATION = 12
EXIT_FAILURE = 13

SUBCOMMANDS = {
    "calibrate": "calibrate",
    "test": "test",
    "figure1": "figure1",
    "figure2": "figure2",
    "type1": "type1",
    "power": "power_sweep",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _key_value(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"expected key=value, got {text!r}")
    key, val = text.split("=", 1)
    return key.strip(), val.strip()


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="haarmono", description="Monotonicity tests and their Monte Carlo experiments.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat key=value file")
        p.add_argument("--seed", type=int)
        p.add_argument("--reps", type=int)
        p.add_argument("--alpha", type=float)
        p.add_argument("--out", help="output path (CSV, or the report for `test`); stdout if omitted")
        p.add_argument("--cache", help="calibration cache file")
        p.add_argument("--workers", type=int)
        p.add_argument("--set", dest="overrides", action="append", type=_key_value, default=[],
                       metavar="KEY=VALUE", help="any config key; repeatable")
        if name != "test":
            p.add_argument("--plot", action="store_true", default=None, help="also write a PNG next to --out")
        if name == "calibrate":
            p.add_argument("--kind", choices=["bayes_single", "map_single", "zeta_circ", "exp_sup"])
            p.add_argument("--n-h", dest="n_h", type=int)
        if name in ("test", "type1", "power"):
            p.add_argument("--test", help="map, bayes or adaptive (sweeps accept a comma list)")
        if name == "test":
            p.add_argument("--signal", help="single-column sample file (length a power of two)")
            p.add_argument("--sigma", type=float)
            p.add_argument("--generator", choices=["linear", "dip", "constant"])
        if name == "power":
            p.add_argument("--snr-rule", dest="snr_rule", choices=["R", "R_tilde", "R_plus", "R_cross"])
            p.add_argument("--engine", choices=["summary", "field"])
    return parser


def config_from_args(args) -> ExperimentConfig:
    overrides = dict(args.overrides)
    for key in ExperimentConfig.field_names():
        val = getattr(args, key, None)
        if val is not None and key not in overrides:
            overrides[key] = val
    overrides["experiment"] = SUBCOMMANDS[args.command]
    return ExperimentConfig.from_sources(args.config, overrides)


def _emit(text: str, path) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = config_from_args(args)
        config.require_seed()
        if config.experiment == "test":
            report = run_test(config)
            _emit(report.to_record(), config.out)
            return EXIT_REJECT if report.rejected else EXIT_OK
        result = run(config)
        _emit(write_csv(result), config.out)
        if config.plot:
            if not config.out:
                raise ConfigError("--plot needs --out (the PNG goes next to the CSV)")
            from .plotting import render

            render(result, config.out)
        return EXIT_OK
    except CalibrationMissing as exc:
        print(f"haarmono: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (ConfigError, ValueError, OSError) as exc:
        print(f"haarmono: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"haarmono: unexpected failure: {exc!r}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
