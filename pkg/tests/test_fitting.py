import math

import numpy as np
import pytest

from nuqutrit.fitting import (
    FitError,
    cosine,
    damped_cosine,
    fit_curve,
    line,
    lorentzian,
)


class TestExactData:
    def test_lorentzian(self):
        xs = np.linspace(4.85, 4.95, 41)
        ys = lorentzian(xs, 0.9, 4.897, 0.008, 0.05)
        fit = fit_curve("lorentzian", xs, ys)
        assert fit.residual_norm < 1e-10
        assert fit.params[1] == pytest.approx(4.897, abs=1e-9)

    def test_cosine(self):
        xs = np.linspace(0.0, 0.7, 36)
        ys = cosine(xs, 0.5, 0.44, math.pi, 0.5)
        fit = fit_curve("cosine", xs, ys)
        assert fit.residual_norm < 1e-10
        assert abs(fit.params[1]) == pytest.approx(0.44, rel=1e-8)

    def test_damped_cosine(self):
        # six correlated parameters put the practical exact-data floor near
        # 1e-9 in residual norm
        xs = np.arange(0, 80, dtype=float)
        ys = damped_cosine(xs, 0.5, 0.016, math.pi + 0.008, 0.0, 1 / 3, 1 / 6)
        fit = fit_curve("damped_cosine", xs, ys,
                        p0=[0.5, 0.01, math.pi, 0.0, 1 / 3, 1 / 6])
        assert fit.residual_norm < 1e-8
        assert fit.params[2] == pytest.approx(math.pi + 0.008, abs=1e-7)

    def test_line(self):
        xs = np.linspace(0, 10, 12)
        ys = line(xs, -2.5, 0.7)
        fit = fit_curve("line", xs, ys)
        assert fit.residual_norm < 1e-10
        assert fit.params[0] == pytest.approx(-2.5, rel=1e-12)


class TestDegenerateData:
    def test_constant_to_cosine_gives_zero_amplitude(self):
        xs = np.linspace(0, 5, 30)
        ys = np.full(30, 0.42)
        fit = fit_curve("cosine", xs, ys)
        assert abs(fit.params[0]) < 1e-6
        assert fit.params[3] == pytest.approx(0.42, abs=1e-6)

    def test_insufficient_points(self):
        with pytest.raises(ValueError):
            fit_curve("lorentzian", [1.0, 2.0, 3.0], [1.0, 2.0, 1.0])

    def test_rank_deficient_line(self):
        xs = np.full(10, 2.0)  # no slope information
        ys = np.linspace(0, 1, 10)
        with pytest.raises((FitError, ValueError)):
            fit_curve("line", xs, ys)

    def test_unknown_model(self):
        with pytest.raises(ValueError):
            fit_curve("gaussian", [1, 2, 3], [1, 2, 3])


class TestNoisyData:
    def test_covariance_consistency_monte_carlo(self):
        # parameter errors should be consistent with the reported covariance:
        # over 100 trials, ~95% of deviations lie within 2 sigma
        rng = np.random.default_rng(31)
        xs = np.linspace(0, 10, 60)
        sigma = 0.02
        truth = (1.3, -0.4)
        hits = 0
        total = 0
        for _ in range(100):
            ys = line(xs, *truth) + sigma * rng.normal(size=len(xs))
            fit = fit_curve("line", xs, ys, sigma=np.full(len(xs), sigma))
            err = np.sqrt(np.diag(fit.covariance))
            for p, t, e in zip(fit.params, truth, err):
                total += 1
                if abs(p - t) < 2 * e:
                    hits += 1
        assert hits / total > 0.80

    def test_lorentzian_peak_under_noise(self):
        rng = np.random.default_rng(8)
        xs = np.linspace(4.85, 4.95, 41)
        ys = lorentzian(xs, 0.9, 4.897, 0.01, 0.05) + 0.01 * rng.normal(size=41)
        fit = fit_curve("lorentzian", xs, ys)
        assert fit.params[1] == pytest.approx(4.897, abs=0.002)

    def test_cosine_period_under_noise(self):
        rng = np.random.default_rng(9)
        xs = np.linspace(0.0, 0.7, 36)
        ys = cosine(xs, 0.5, 0.44, math.pi, 0.5) + 0.02 * rng.normal(size=36)
        fit = fit_curve("cosine", xs, ys)
        assert abs(fit.params[1]) == pytest.approx(0.44, rel=0.03)
