# tests/unit/test_garch.py
"""Unit tests for the ARMA(X)-GARCH(1,1) baseline."""

import json

import numpy as np
import pytest
from scipy.signal import lfilter

from tme_forecast.baselines import garch
from tme_forecast.errors import AllFitsFailed, NonStationaryFit, ShapeMismatch, TrainingError
from tme_forecast.synthetic import GarchSimSpec, gen_garch_series


@pytest.fixture(scope="module")
def simulated():
    spec = GarchSimSpec(omega=0.05, alpha=0.1, beta=0.85, n=4000, seed=7, mean=1.0, phi=(0.5,), theta=(0.2,))
    return gen_garch_series(spec)


@pytest.fixture(scope="module")
def fitted(simulated):
    return garch.fit(simulated.log_y, None, garch.ArmaxSpec(1, 1))


class TestArmaxSpec:
    """Tests for model orders."""

    def test_order_bounds(self):
        """Test p and q outside [1, 10] are rejected."""
        with pytest.raises(ValueError):
            garch.ArmaxSpec(0, 1)
        with pytest.raises(ValueError):
            garch.ArmaxSpec(1, 11)

    def test_exog_needs_dim(self):
        """Test use_exog without a dimension is rejected."""
        with pytest.raises(ValueError):
            garch.ArmaxSpec(1, 1, use_exog=True)

    def test_n_params(self):
        """Test the parameter count includes exogenous and GARCH terms."""
        assert garch.ArmaxSpec(2, 1).n_params == 1 + 2 + 1 + 3
        assert garch.ArmaxSpec(2, 1, use_exog=True, exog_dim=4).n_params == 11


class TestGarchRecursion:
    """Tests for the variance filter and likelihood."""

    def test_matches_loop(self):
        """Test the filtered variance equals the explicit recursion."""
        eps = np.random.default_rng(0).standard_normal(50)
        out = garch.garch_variance(eps, 0.1, 0.2, 0.7, 1.5)
        expected = [1.5]
        for e in eps[:-1]:
            expected.append(0.1 + 0.2 * e * e + 0.7 * expected[-1])
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_loglik(self):
        """Test the Gaussian log-likelihood sums the per-step terms."""
        eps = np.array([0.5, -1.0, 0.25])
        s2 = garch.garch_variance(eps, 0.1, 0.2, 0.7, 1.0)
        expected = -0.5 * np.sum(np.log(2 * np.pi) + np.log(s2) + eps ** 2 / s2)
        assert garch.garch_loglik(eps, 0.1, 0.2, 0.7, 1.0) == pytest.approx(expected)

    def test_p_values(self):
        """Test a z statistic of 1.96 has a two-sided p-value near 0.05."""
        params = garch.GarchParams(1.96, 0.0, 0.0, (1.0, 1.0, 1.0))
        assert params.p_values[0] == pytest.approx(0.05, abs=1e-3)
        assert params.persistence == 0.0


class TestStationarity:
    """Tests for the AR root check."""

    def test_stationary(self):
        """Test a stable AR polynomial passes."""
        garch.check_stationary(np.array([0.5, 0.3]))

    def test_explosive(self):
        """Test an explosive AR coefficient is rejected."""
        with pytest.raises(NonStationaryFit):
            garch.check_stationary(np.array([1.1]))


class TestFit:
    """Tests for two-stage estimation on simulated paths."""

    def test_recovers_parameters(self, fitted):
        """Test the estimates land near the simulated values."""
        assert fitted.garch.alpha == pytest.approx(0.1, abs=0.05)
        assert fitted.garch.beta == pytest.approx(0.85, abs=0.1)
        assert fitted.phi[0] == pytest.approx(0.5, abs=0.1)
        assert fitted.mu / (1.0 - fitted.phi[0]) == pytest.approx(1.0, abs=0.15)
        assert fitted.garch.persistence < 1.0

    def test_aic(self, fitted):
        """Test AIC = 2k - 2 loglik."""
        assert fitted.aic == pytest.approx(2 * fitted.spec.n_params - 2 * fitted.loglik)

    def test_standardized_residuals(self, fitted):
        """Test standardized residuals have roughly unit variance."""
        assert np.var(fitted.std_residuals) == pytest.approx(1.0, abs=0.15)

    def test_too_short(self):
        """Test a short series is refused."""
        with pytest.raises(TrainingError):
            garch.fit(np.zeros(20), None, garch.ArmaxSpec(1, 1))

    def test_exog_checks(self, simulated):
        """Test the exogenous matrix must be present and aligned."""
        spec = garch.ArmaxSpec(1, 1, use_exog=True, exog_dim=2)
        with pytest.raises(ShapeMismatch):
            garch.fit(simulated.log_y, None, spec)
        with pytest.raises(ShapeMismatch):
            garch.fit(simulated.log_y, np.zeros((10, 2)), spec)

    def test_exog_coefficient(self):
        """Test an informative lagged regressor gets a sizeable coefficient."""
        rng = np.random.default_rng(3)
        x = rng.standard_normal((3000, 1))
        drive = 1.0 + 2.0 * x[:, 0] + rng.standard_normal(3000)
        log_y = lfilter([1.0], [1.0, -0.5], drive)
        result = garch.fit(log_y, x, garch.ArmaxSpec(1, 1, use_exog=True, exog_dim=1))
        # psi is on standardized exog
        assert result.psi[0] / result.exog_scale[0] == pytest.approx(2.0, abs=0.1)

    def test_white_noise_has_no_structure(self):
        """Test an ARMA(1,1) fit on Gaussian noise finds no lag-1 effect and almost no ARCH term."""
        log_y = np.random.default_rng(21).standard_normal(20_000)
        result = garch.fit(log_y, None, garch.ArmaxSpec(1, 1))
        # only φ + θ is identified when the AR and MA factors can cancel
        assert abs(result.phi[0] + result.theta[0]) < 0.1
        assert abs(result.phi[0]) < 1.0
        assert result.mu == pytest.approx(0.0, abs=0.1)
        assert 0.0 <= result.garch.alpha < 0.05
        assert result.garch.omega > 0.0
        assert result.garch.persistence < 1.0

    def test_recovers_arma21(self):
        """Test ARMA(2,1) coefficients on 20k Gaussian steps land within 0.05."""
        spec = GarchSimSpec(
            omega=1.0, alpha=0.0, beta=0.0, n=20_000, seed=4, phi=(0.5, -0.3), theta=(0.4,),
        )
        result = garch.fit(gen_garch_series(spec).log_y, None, garch.ArmaxSpec(2, 1))
        np.testing.assert_allclose(result.phi, [0.5, -0.3], atol=0.05)
        np.testing.assert_allclose(result.theta, [0.4], atol=0.05)


class TestSelectOrder:
    """Tests for the AIC grid search."""

    def test_best_row(self, simulated):
        """Test the selected order has the smallest AIC in the table."""
        spec, table = garch.select_order(simulated.log_y, None, [1, 2], [1])
        assert len(table) == 2
        ok = table[table['status'] == 'ok']
        best = ok.loc[ok['aic'].idxmin()]
        assert (spec.p, spec.q) == (int(best['p']), int(best['q']))

    def test_all_candidates_fail(self):
        """Test a series too short for every candidate raises after trying them all."""
        with pytest.raises(AllFitsFailed):
            garch.select_order(np.zeros(20), None, [1, 2], [1])


class TestExogAic:
    """Tests for the AIC penalty on irrelevant regressors."""

    def test_white_noise_exog_not_preferred(self):
        """Test white-noise regressors do not lower the AIC on at least 8 of 10 seeds."""
        kept = 0
        for seed in range(10):
            spec = GarchSimSpec(
                omega=0.05, alpha=0.05, beta=0.9, n=2000, seed=seed, mean=1.0, phi=(0.5,),
            )
            log_y = gen_garch_series(spec).log_y
            noise = np.random.default_rng(100 + seed).standard_normal((log_y.size, 13))
            plain = garch.fit(log_y, None, garch.ArmaxSpec(1, 1))
            with_exog = garch.fit(log_y, noise, garch.ArmaxSpec(1, 1, use_exog=True, exog_dim=13))
            kept += with_exog.aic >= plain.aic
        assert kept >= 8


class TestForecast:
    """Tests for one-step and rolling forecasts."""

    def test_rolling_reproduces_fit(self, simulated, fitted):
        """Test filtering the training series reproduces the fitted residuals and variances."""
        mean, var = garch.rolling_forecast(fitted, simulated.log_y, None, 0)
        np.testing.assert_allclose(mean, simulated.log_y - fitted.residuals, rtol=1e-10)
        np.testing.assert_allclose(var, fitted.sigma2, rtol=1e-10)

    def test_one_step_matches_rolling(self, simulated, fitted):
        """Test the single-step forecast agrees with the rolling filter."""
        y = simulated.log_y
        mean, var = garch.rolling_forecast(fitted, y, None, 0)
        t = 100
        history = garch.GarchHistory(log_y=y[:t], residuals=fitted.residuals[:t], sigma2=float(fitted.sigma2[t - 1]))
        m, v = garch.forecast(fitted, history)
        assert m == pytest.approx(mean[t], rel=1e-10)
        assert v == pytest.approx(var[t], rel=1e-10)

    def test_start_offset(self, simulated, fitted):
        """Test start drops the leading forecasts."""
        full, _ = garch.rolling_forecast(fitted, simulated.log_y, None, 0)
        tail, _ = garch.rolling_forecast(fitted, simulated.log_y, None, 3000)
        np.testing.assert_array_equal(tail, full[3000:])

    def test_short_history(self, fitted):
        """Test a history shorter than the order is refused."""
        with pytest.raises(ValueError):
            garch.forecast(fitted, garch.GarchHistory(np.zeros(0), np.zeros(0), 1.0))

    def test_report_round_trip(self, simulated, fitted):
        """Test a model rebuilt from its JSON report forecasts identically."""
        report = json.loads(json.dumps(garch.fit_report(fitted)))
        assert report['model'] == 'garch'
        assert set(report['garch']) == {'omega', 'alpha', 'beta'}
        rebuilt = garch.fit_from_report(report)
        a = garch.rolling_forecast(fitted, simulated.log_y, None, 3500)
        b = garch.rolling_forecast(rebuilt, simulated.log_y, None, 3500)
        np.testing.assert_allclose(a[0], b[0], rtol=1e-12)
        np.testing.assert_allclose(a[1], b[1], rtol=1e-12)


class TestResidualAcf:
    """Tests for residual autocorrelation diagnostics."""

    def test_white_noise(self):
        """Test white noise stays mostly inside the 95% band."""
        x = np.random.default_rng(1).standard_normal(2000)
        result = garch.residual_acf(x, 20)
        assert result.band == pytest.approx(1.96 / np.sqrt(2000))
        assert np.mean(np.abs(result.acf) > result.band) <= 0.2
        assert list(result.to_frame().columns) == ['lag', 'acf', 'band']

    def test_ar_signal(self):
        """Test an AR(1) series shows its lag-1 autocorrelation."""
        sim = gen_garch_series(GarchSimSpec(omega=0.1, alpha=0.0, beta=0.0, n=5000, seed=2, phi=(0.6,)))
        assert garch.residual_acf(sim.log_y, 5).acf[0] == pytest.approx(0.6, abs=0.05)

    def test_too_short(self):
        """Test max_lag must be below the sample size."""
        with pytest.raises(ValueError):
            garch.residual_acf(np.zeros(5), 5)


class TestDegenerateModels:
    """Tests for hand-built fits with trivial dynamics."""

    @staticmethod
    def _flat(mu: float, omega: float) -> garch.FittedArmaxGarch:
        return garch.FittedArmaxGarch(
            spec=garch.ArmaxSpec(1, 1),
            mu=mu,
            phi=np.zeros(1),
            theta=np.zeros(1),
            psi=np.zeros(0),
            garch=garch.GarchParams(omega, 0.0, 0.0),
            loglik=0.0,
            aic=0.0,
            residuals=np.zeros(0),
            sigma2=np.zeros(0),
            y_mean=mu,
            sigma2_0=omega,
        )

    def test_constant_variance(self):
        """Test alpha = beta = 0 forecasts variance omega everywhere."""
        y = np.random.default_rng(5).standard_normal(50)
        _, var = garch.rolling_forecast(self._flat(0.0, 0.3), y, None, 0)
        np.testing.assert_allclose(var, 0.3)

    def test_constant_mean(self):
        """Test zero ARMA coefficients forecast mu."""
        y = np.random.default_rng(6).standard_normal(50)
        mean, _ = garch.rolling_forecast(self._flat(1.25, 1.0), y, None, 0)
        np.testing.assert_allclose(mean, 1.25)
        m, v = garch.forecast(self._flat(1.25, 1.0), garch.GarchHistory(y, y - 1.25, 1.0))
        assert (m, v) == (pytest.approx(1.25), pytest.approx(1.0))

    def test_alternating_acf(self):
        """Test an alternating series has lag-one autocorrelation near -1."""
        x = 3.0 + np.tile([1.0, -1.0], 500)
        assert garch.residual_acf(x, 2).acf[0] == pytest.approx(-1.0, abs=0.01)

    def test_single_candidate(self, simulated):
        """Test a one-point grid returns that order."""
        spec, table = garch.select_order(simulated.log_y, None, [1], [1])
        assert (spec.p, spec.q) == (1, 1)
        assert len(table) == 1
