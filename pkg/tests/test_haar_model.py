"""Dyadic coefficients, their estimates and the discretised noise model."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from haarmono.haar_model import (
    CoefficientField,
    DyadicIndex,
    SampledSignal,
    haar_estimates,
    haar_estimates_direct,
    level_size,
    read_signal,
    sample_function,
    sigma_at_level,
    simulate_observation,
    theta_functional,
)


class TestDyadicIndex:
    def test_grid(self):
        idx = DyadicIndex(3, 2)
        assert idx.h == 0.125
        assert idx.t == 5 * 0.125
        assert idx.n_h == 4
        assert idx.t - idx.h >= 0 and idx.t + idx.h <= 1

    @pytest.mark.parametrize("level,pos", [(0, 0), (2, 2), (1, -1)])
    def test_inadmissible(self, level, pos):
        with pytest.raises(ValueError):
            DyadicIndex(level, pos)

    @given(st.integers(1, 30), st.data())
    def test_admissible_support(self, level, data):
        pos = data.draw(st.integers(0, level_size(level) - 1))
        idx = DyadicIndex(level, pos)
        assert 0 <= idx.t - idx.h and idx.t + idx.h <= 1
        assert idx.n_h == 2 ** (level - 1)


class TestSigma:
    def test_formula(self):
        for k in range(1, 12):
            assert sigma_at_level(0.3, k) == pytest.approx(0.3 * math.sqrt(2 * 2**k))

    def test_field_sigma_h(self):
        f = CoefficientField.zeros(4, sigma=2.0)
        assert f.sigma_h(3) == pytest.approx(2.0 * 4.0)


class TestThetaFunctional:
    def test_constant(self):
        for idx in [DyadicIndex(1, 0), DyadicIndex(4, 5)]:
            assert theta_functional(lambda u: 3.7, idx) == pytest.approx(0.0, abs=1e-10)

    @pytest.mark.parametrize("level", [1, 2, 5, 9])
    def test_identity_gives_h(self, level):
        idx = DyadicIndex(level, level_size(level) // 2)
        assert theta_functional(lambda u: u, idx) == pytest.approx(idx.h, abs=1e-10)
        assert theta_functional(lambda u: -u, idx) == pytest.approx(-idx.h, abs=1e-10)

    def test_quadratic_closed_form(self):
        # mean of u^2 on [t, t+h] minus on [t-h, t] is 2 t h
        idx = DyadicIndex(3, 1)
        assert theta_functional(lambda u: u * u, idx) == pytest.approx(2 * idx.t * idx.h, abs=1e-10)

    def test_monotone_functions_give_nonnegative_field(self, rng):
        for _ in range(20):
            knots = np.sort(np.concatenate([[0.0, 1.0], rng.random(5)]))
            vals = np.cumsum(rng.exponential(size=knots.size))
            f = lambda u, k=knots, v=vals: float(np.interp(u, k, v))
            for k in range(1, 6):
                for j in range(level_size(k)):
                    assert theta_functional(f, DyadicIndex(k, j), points=knots) >= -1e-10


class TestSimulation:
    def test_zero_sigma_returns_truth(self):
        truth = CoefficientField({1: [0.5], 2: [-1.0, 2.0]}, sigma=0.0)
        out = simulate_observation(truth, seed=1)
        for k in truth.levels:
            np.testing.assert_array_equal(out.levels[k], truth.levels[k])

    def test_variance_per_level(self):
        truth = CoefficientField.zeros(15, sigma=1.0)
        out = simulate_observation(truth, seed=3)
        for k in (14, 15):  # n_h >= 1e4
            var = out.levels[k].var()
            assert var == pytest.approx(2.0 ** (k + 1), rel=0.05)

    def test_seed_determinism(self):
        truth = CoefficientField.zeros(6)
        a = simulate_observation(truth, seed=42)
        b = simulate_observation(truth, seed=42)
        for k in a.levels:
            np.testing.assert_array_equal(a.levels[k], b.levels[k])


class TestHaarEstimates:
    def test_constant_samples(self):
        est = haar_estimates(SampledSignal(np.full(64, 2.5)))
        for arr in est.levels.values():
            np.testing.assert_allclose(arr, 0.0, atol=1e-14)

    def test_default_max_level(self):
        assert haar_estimates(SampledSignal(np.zeros(256))).max_level == 6

    def test_max_level_above_resolution(self):
        with pytest.raises(ValueError):
            haar_estimates(SampledSignal(np.zeros(16)), max_level=5)

    def test_identity_riemann_bound(self):
        y = sample_function(lambda u: u, 10)
        est = haar_estimates(y, 10)
        for k, arr in est.levels.items():
            assert np.max(np.abs(arr - 2.0**-k)) <= 1.0 / y.n

    def test_matches_piecewise_constant_interpolant(self, rng):
        values = rng.standard_normal(16)
        y = SampledSignal(values)
        f = lambda u: values[min(int(u * 16), 15)]
        breaks = np.arange(17) / 16
        est = haar_estimates(y, 4)
        for idx in est:
            assert est[idx] == pytest.approx(theta_functional(f, idx, points=breaks), abs=1e-9)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(1, 8), st.integers(0, 2**31 - 1))
    def test_pyramid_equals_direct(self, J, seed):
        y = SampledSignal(np.random.default_rng(seed).standard_normal(2**J))
        fast = haar_estimates(y, J)
        slow = haar_estimates_direct(y, J)
        for k in fast.levels:
            np.testing.assert_allclose(fast.levels[k], slow.levels[k], atol=1e-12)

    def test_noise_scale_matches_continuum(self):
        sigma, J, reps = 0.7, 8, 4000
        n = 2**J
        rng = np.random.default_rng(11)
        noise = sigma * math.sqrt(n) * rng.standard_normal((reps, n))
        sds = {k: [] for k in range(1, J + 1)}
        for row in noise:
            est = haar_estimates(SampledSignal(row, sigma), J)
            for k in sds:
                sds[k].append(est.levels[k][0])
        for k, vals in sds.items():
            assert np.std(vals) == pytest.approx(sigma_at_level(sigma, k), rel=0.06)

    def test_whitening(self):
        J, reps = 6, 4000
        rng = np.random.default_rng(5)
        rows = []
        for _ in range(reps):
            y = SampledSignal(math.sqrt(2**J) * rng.standard_normal(2**J), 1.0)
            est = haar_estimates(y, J)
            rows.append(np.concatenate([est.standardized(k) for k in range(1, J + 1)]))
        corr = np.corrcoef(np.array(rows), rowvar=False)
        off = corr[~np.eye(corr.shape[0], dtype=bool)]
        # joint check over 63 * 62 / 2 pairs; 4/sqrt(reps) is a 4 s.e. band
        assert np.max(np.abs(off)) <= 4 / math.sqrt(reps)


class TestSignalIo:
    def test_read(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("# header\n1.0\n2\n\n3.5  # trailing\n4\n")
        y = read_signal(p, 0.1)
        np.testing.assert_array_equal(y.values, [1.0, 2.0, 3.5, 4.0])
        assert y.noise_sigma == 0.1

    def test_bad_number(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("1\nx\n")
        with pytest.raises(ValueError, match="2"):
            read_signal(p, 1.0)

    def test_length_not_power_of_two(self, tmp_path):
        p = tmp_path / "s.txt"
        p.write_text("1\n2\n3\n")
        with pytest.raises(ValueError, match="power of two"):
            read_signal(p, 1.0)


class TestCoefficientField:
    def test_wrong_shape(self):
        with pytest.raises(ValueError):
            CoefficientField({1: [0.0], 2: [0.0]})

    def test_gap_in_levels(self):
        with pytest.raises(ValueError):
            CoefficientField({1: [0.0], 3: np.zeros(4)})

    def test_read_only(self):
        f = CoefficientField.zeros(3)
        with pytest.raises(ValueError):
            f.levels[2][0] = 1.0

    def test_from_function(self):
        f = CoefficientField.from_function(lambda u: u, 3)
        for idx in f:
            assert f[idx] == pytest.approx(idx.h, abs=1e-10)
        assert len(f) == 7
