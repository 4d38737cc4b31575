"""Configuration, Monte Carlo harness, CSV output and the command line."""

import math

import numpy as np
import pytest

from haarmono import __version__
from haarmono.experiments import harness as H
from haarmono.experiments.cli import EXIT_CALIBRATION, EXIT_INPUT, EXIT_OK, EXIT_REJECT, main
from haarmono.experiments.config import ConfigError, ExperimentConfig, read_config_file
from haarmono.experiments.harness import DIP_INTERVAL


def cfg(**kw):
    kw.setdefault("seed", 1)
    return ExperimentConfig(**kw)


class TestConfig:
    def test_file_then_overrides(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("# comment\nexperiment = power_sweep\nreps=50\noffsets=-1,0.5\nseed=3\n")
        c = ExperimentConfig.from_sources(p, {"reps": "70", "alpha": 0.1})
        assert c.experiment == "power_sweep" and c.reps == 70 and c.alpha == 0.1
        assert c.offsets == (-1.0, 0.5) and c.seed == 3

    @pytest.mark.parametrize(
        "text",
        ["reps=0\n", "bogus=1\n", "alpha=2\n", "test=foo\n", "reps=abc\n", "just a line\n", "snr_rule=Q\n"],
    )
    def test_rejects_bad_values(self, tmp_path, text):
        p = tmp_path / "c.txt"
        p.write_text(text)
        with pytest.raises(ConfigError):
            ExperimentConfig.from_sources(p)

    def test_seed_mandatory(self):
        with pytest.raises(ConfigError, match="seed"):
            ExperimentConfig().require_seed()

    def test_echo_covers_every_field(self):
        c = cfg()
        keys = [k for k, _ in c.echo()]
        assert keys == ExperimentConfig.field_names()

    def test_echo_round_trips(self, tmp_path):
        c = cfg(offsets=(-0.5, 1.25), reps=17, omega=32.0)
        p = tmp_path / "echo.txt"
        p.write_text("".join(f"{k}={v}\n" for k, v in c.echo() if v != "None"))
        assert ExperimentConfig.from_sources(p) == c

    def test_read_config_file_types(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("plot=yes\nmax_level=none\n")
        assert read_config_file(p) == {"plot": True, "max_level": None}


class TestFigure1:
    def test_columns_and_exceedances(self):
        r = H.run_figure1(cfg(experiment="figure1", reps=20_000, n_h_list=(4, 64)))
        assert r.columns[:7] == ["n_h", "x", "exceed_B", "exceed_zeta", "logtail_B", "logtail_zeta", "delta"]
        assert min(r.column("exceed_B").min(), r.column("exceed_zeta").min()) >= 100
        assert set(r.column("n_h")) == {4, 64}
        np.testing.assert_allclose(r.column("delta"), r.column("logtail_B") - r.column("logtail_zeta"))

    def test_bands_scale(self):
        big = H.run_figure1(cfg(experiment="figure1", reps=200_000, n_h_list=(16,)))
        small = H.run_figure1(cfg(experiment="figure1", reps=20_000, n_h_list=(16,)))
        # compare at shared grid points near the centre
        for x in (0.0, 1.0, 2.0, 3.0):
            a = big.select(x=x)[0]["band"]
            b = small.select(x=x)[0]["band"]
            assert b / a == pytest.approx(math.sqrt(10), rel=0.1)

    def test_grid_rule(self):
        a = np.arange(1000.0)
        g = H.figure1_grid(a, a, min_exceed=100)
        assert g[0] == 0.0 and np.sum(a > g[-1]) == 100


class TestFigure2:
    def test_rows(self):
        r = H.run_figure2(cfg(experiment="figure2", k_max=50))
        assert len(r.rows) == 100
        first = r.select(m=1, k=1)[0]
        assert first["psi"] == 1.0
        assert first["L"] == pytest.approx(-math.log((1 - (1 + math.log(1 + math.log(2))) ** -0.1) / 0.1))

    def test_deterministic(self):
        a = H.write_csv(H.run_figure2(cfg(experiment="figure2", k_max=30)))
        b = H.write_csv(H.run_figure2(cfg(experiment="figure2", k_max=30)))
        assert a == b


class TestPowerSweep:
    def test_zero_amplitude_is_null(self):
        # offsets far below -sqrt(R) clip the amplitude to 0
        r = H.run_power_sweep(cfg(experiment="power_sweep", reps=4000, offsets=(-100.0,), test="map"))
        row = r.rows[0]
        assert r.select(test="map")[0]["mean_amplitude"] == 0.0
        assert row[4] == pytest.approx(0.95, abs=4 * math.sqrt(0.05 * 0.95 / 4000))

    def test_engines_agree(self):
        common = dict(experiment="power_sweep", reps=3000, prior="uniform", prior_levels=7, max_level=7,
                      test="map,bayes", offsets=(-1.0, 0.0, 1.0), calibration_reps=100_000)
        a = H.run_power_sweep(cfg(engine="summary", **common))
        b = H.run_power_sweep(cfg(engine="field", **common))
        for ra, rb in zip(a.rows, b.rows):
            assert ra[0] == rb[0] and ra[3] == rb[3]
            assert abs(ra[4] - rb[4]) <= 4 * math.hypot(ra[5], rb[5]) + 1e-9

    def test_beta_decreases_with_amplitude(self):
        r = H.run_power_sweep(cfg(experiment="power_sweep", reps=500, test="map,adaptive"))
        for t in ("map", "adaptive"):
            beta = [row["beta_bar"] for row in r.select(test=t)]
            assert all(np.diff(beta) <= 0)

    def test_metadata(self):
        r = H.run_power_sweep(cfg(experiment="power_sweep", reps=100, test="bayes", calibration_reps=20_000))
        text = H.write_csv(r)
        assert f"# version={__version__}\n" in text
        assert "# config.seed=1\n" in text
        assert "# calibration=zeta_circ,256,0.05,20000,1,value=" in text

    def test_empty_grid(self):
        with pytest.raises(ConfigError):
            H.run_power_sweep(cfg(experiment="power_sweep", offsets=()))


class TestType1:
    def test_uniform_map_close_to_alpha(self):
        r = H.run_type1(cfg(experiment="type1", reps=4000, prior="uniform", prior_levels=8, max_level=8,
                            engine="field", test="map,adaptive"))
        m = r.select(test="map")[0]
        assert 0.02 <= m["rejection_rate"] <= 0.08
        assert r.select(test="adaptive")[0]["rejection_rate"] <= 0.05 + 3 * m["se"]


class TestRunTest:
    def test_linear_retained(self):
        rep = H.run_test(cfg(sigma=0.002, generator="linear"))
        assert not rep.rejected

    def test_dip_rejected_inside_dip(self):
        rep = H.run_test(cfg(sigma=0.002, generator="dip"))
        assert rep.rejected
        idx = rep.argmax_index
        lo, hi = DIP_INTERVAL
        assert idx.t - idx.h < hi and idx.t + idx.h > lo

    def test_signal_file(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("\n".join(str(v) for v in np.linspace(0, 1, 64)) + "\n")
        rep = H.run_test(cfg(signal=str(p), sigma=0.01, test="adaptive"))
        assert not rep.rejected

    def test_one_test_only(self):
        with pytest.raises(ConfigError):
            H.run_test(cfg(test="map,bayes"))


class TestCli:
    def test_test_exit_codes(self, tmp_path, capsys):
        assert main(["test", "--seed", "1", "--sigma", "0.002", "--generator", "linear"]) == EXIT_OK
        assert main(["test", "--seed", "1", "--sigma", "0.002", "--generator", "dip"]) == EXIT_REJECT
        out = capsys.readouterr().out
        assert "decision=reject_H0" in out

    def test_missing_calibration(self, tmp_path, capsys):
        code = main(["test", "--seed", "1", "--test", "bayes", "--cache", str(tmp_path / "c.csv")])
        assert code == EXIT_CALIBRATION
        assert "haarmono calibrate --kind zeta_circ" in capsys.readouterr().err

    def test_calibrate_then_test(self, tmp_path):
        cache = str(tmp_path / "c.csv")
        assert main(["calibrate", "--seed", "2", "--kind", "zeta_circ", "--reps", "20000", "--cache", cache,
                     "--out", str(tmp_path / "cal.csv")]) == EXIT_OK
        assert main(["test", "--seed", "1", "--test", "bayes", "--cache", cache, "--sigma", "0.002",
                     "--generator", "dip", "--out", str(tmp_path / "r.txt")]) == EXIT_REJECT
        assert "decision=reject_H0" in (tmp_path / "r.txt").read_text()

    def test_malformed_signal(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("1\n2\noops\n4\n")
        assert main(["test", "--seed", "1", "--signal", str(p)]) == EXIT_INPUT

    def test_usage_errors(self):
        assert main(["type1", "--reps", "10"]) == EXIT_INPUT  # no seed
        with pytest.raises(SystemExit) as exc:
            main(["nonsense"])
        assert exc.value.code == EXIT_INPUT

    def test_byte_identical_outputs(self, tmp_path):
        args = ["power", "--seed", "5", "--reps", "200", "--test", "map,adaptive", "--plot",
                "--out", str(tmp_path / "a.csv")]
        assert main(args) == EXIT_OK
        first = (tmp_path / "a.csv").read_bytes(), (tmp_path / "a.png").read_bytes()
        assert main(args) == EXIT_OK
        assert (tmp_path / "a.csv").read_bytes() == first[0]
        assert (tmp_path / "a.png").read_bytes() == first[1]

    def test_workers_do_not_change_output(self, tmp_path):
        base = ["figure1", "--seed", "3", "--reps", "30000", "--set", "n_h_list=8"]
        main(base + ["--out", str(tmp_path / "a.csv")])
        main(base + ["--workers", "3", "--out", str(tmp_path / "b.csv")])
        a = [l for l in (tmp_path / "a.csv").read_text().splitlines() if not l.startswith(("# config.workers", "# config.out"))]
        b = [l for l in (tmp_path / "b.csv").read_text().splitlines() if not l.startswith(("# config.workers", "# config.out"))]
        assert a == b

    def test_plot_needs_out(self, capsys):
        assert main(["figure2", "--seed", "0", "--set", "k_max=10", "--plot"]) == EXIT_INPUT

    def test_config_file(self, tmp_path):
        p = tmp_path / "c.txt"
        p.write_text("seed=4\nk_max=12\nm_list=1\n")
        out = tmp_path / "f.csv"
        assert main(["figure2", "--config", str(p), "--out", str(out), "--plot"]) == EXIT_OK
        lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
        assert len(lines) == 13
        assert (tmp_path / "f.png").stat().st_size > 0
