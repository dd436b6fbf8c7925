# tests/unit/test_tme_model.py
"""Unit tests for TME parameters, component math, loss and gradient."""

import numpy as np
import pytest

from tme_forecast.errors import LogNormalOverflow, NonPositiveTarget, ShapeMismatch
from tme_forecast.preprocess import ModelInstance
from tme_forecast.synthetic import fd_gradient, gradient_rel_error
from tme_forecast.tme import (
    GateParams,
    SourceParams,
    TmeParams,
    component_moments,
    gate_probs,
    init_params,
    lognormal_logpdf,
    lognormal_moments,
    loss_gradient,
    nll_loss,
    param_count,
    random_params,
    source_log_moments,
)
from tme_forecast.tme.params import bias_mask, zeros

HALF_LOG_2PI = 0.5 * np.log(2.0 * np.pi)


def _single_source(d: int = 2, h: int = 3, b_mu: float = 0.0, b_sigma: float = 0.0) -> TmeParams:
    source = SourceParams(np.zeros(d), np.zeros(h), b_mu, np.zeros(d), np.zeros(h), b_sigma)
    return TmeParams((source,), GateParams((np.zeros(d),), (np.zeros(h),), np.zeros(1)))


def _instance(windows, y: float = 1.0) -> ModelInstance:
    return ModelInstance(t=0.0, v=y, a=1.0, y=y, windows=tuple(windows))


class TestParams:
    """Tests for the parameter containers and flat layout."""

    def test_param_count(self):
        """Test three bilinear triples per source."""
        assert param_count((6, 13, 6, 13), 10) == 3 * (17 + 24 + 17 + 24)

    def test_flatten_round_trip(self, small_params):
        """Test unflatten inverts flatten."""
        vector = small_params.flatten()
        again = TmeParams.unflatten(vector, small_params.dims, small_params.h)
        np.testing.assert_array_equal(again.flatten(), vector)
        assert again.dims == (2, 3)

    def test_flat_order(self):
        """Test per-source blocks come first, then gate triples."""
        params = TmeParams.unflatten(np.arange(param_count((1,), 1), dtype=float), (1,), 1)
        theta = params.sources[0]
        assert (theta.L_mu[0], theta.R_mu[0], theta.b_mu) == (0.0, 1.0, 2.0)
        assert (theta.L_sigma[0], theta.R_sigma[0], theta.b_sigma) == (3.0, 4.0, 5.0)
        assert (params.gate.L_z[0][0], params.gate.R_z[0][0], params.gate.b_z[0]) == (6.0, 7.0, 8.0)

    def test_wrong_size(self):
        """Test a vector of the wrong length is rejected."""
        with pytest.raises(ShapeMismatch):
            TmeParams.unflatten(np.zeros(5), (2,), 3)

    def test_bias_mask(self):
        """Test the mask marks exactly the 3·S bias positions."""
        mask = bias_mask((2, 3), 4)
        assert mask.sum() == 6
        params = TmeParams.unflatten(np.where(mask, 1.0, 0.0), (2, 3), 4)
        assert [s.b_mu for s in params.sources] == [1.0, 1.0]
        assert params.gate.b_z.tolist() == [1.0, 1.0]

    def test_init_params(self, rng):
        """Test initialization starts every component at the marginal of ln y."""
        log_y = rng.normal(1.0, 2.0, 500)
        params = init_params((2, 3), 4, log_y, rng)
        for s in params.sources:
            assert s.b_mu == pytest.approx(log_y.mean())
            assert s.b_sigma == pytest.approx(np.log(log_y.var()))
            assert np.all(np.abs(s.L_mu) <= 0.05)
        np.testing.assert_array_equal(params.gate.b_z, 0.0)


class TestSourceLogMoments:
    """Tests for the bilinear component moments."""

    def test_zero_window(self):
        """Test an all-zero window gives (b_mu, exp(b_sigma))."""
        theta = _single_source(b_mu=0.7, b_sigma=-0.4).sources[0]
        mu, sigma2 = source_log_moments(theta, np.zeros((2, 3)))
        assert mu == 0.7
        assert sigma2 == pytest.approx(np.exp(-0.4))

    def test_single_entry(self):
        """Test L = R = e_1 selects x[0, 0]."""
        theta = SourceParams(np.array([1.0, 0.0]), np.array([1.0, 0.0, 0.0]), 0.0,
                             np.zeros(2), np.zeros(3), 0.0)
        window = np.zeros((2, 3))
        window[0, 0] = 3.0
        mu, _ = source_log_moments(theta, window)
        assert mu == 3.0

    def test_brute_force(self, small_params, rng):
        """Test the bilinear form against a double loop."""
        theta = small_params.sources[1]
        window = rng.normal(size=(3, 3))
        expected = sum(
            theta.L_mu[i] * window[i, j] * theta.R_mu[j] for i in range(3) for j in range(3)
        ) + theta.b_mu
        mu, _ = source_log_moments(theta, window)
        assert mu == pytest.approx(expected, rel=1e-12)

    def test_shape_checked(self, small_params):
        """Test a window of the wrong shape is rejected."""
        with pytest.raises(ShapeMismatch):
            source_log_moments(small_params.sources[0], np.zeros((3, 3)))

    def test_stack(self, small_params, rng):
        """Test a stack of windows matches one-by-one evaluation."""
        theta = small_params.sources[0]
        windows = rng.normal(size=(5, 2, 3))
        mu, sigma2 = source_log_moments(theta, windows)
        for k in range(5):
            mu_k, s2_k = source_log_moments(theta, windows[k])
            assert mu[k] == pytest.approx(mu_k)
            assert sigma2[k] == pytest.approx(s2_k)


class TestGate:
    """Tests for the softmax gate."""

    def _gate(self, b_z) -> GateParams:
        S = len(b_z)
        return GateParams(tuple(np.zeros(1) for _ in range(S)), tuple(np.zeros(1) for _ in range(S)),
                          np.asarray(b_z, dtype=float))

    def test_equal_logits(self):
        """Test equal logits give a uniform gate."""
        probs = gate_probs(self._gate([0.3] * 4), [np.ones((1, 1))] * 4)
        np.testing.assert_allclose(probs, 0.25)

    def test_ln2_example(self):
        """Test f = (ln 2, 0, 0, 0) gives (0.4, 0.2, 0.2, 0.2)."""
        probs = gate_probs(self._gate([np.log(2.0), 0, 0, 0]), [np.ones((1, 1))] * 4)
        np.testing.assert_allclose(probs, [0.4, 0.2, 0.2, 0.2], rtol=1e-12)

    def test_rows_sum_to_one(self, small_params, dataset_factory):
        """Test gate rows are distributions."""
        data = dataset_factory(10, (2, 3), 3)
        _, _, probs = component_moments(small_params, list(data.windows))
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
        assert np.all(probs > 0)

    def test_shift_invariance(self, small_params, dataset_factory):
        """Test adding one constant to every gate logit changes neither values nor argmax."""
        windows = list(dataset_factory(12, (2, 3), 3).windows)
        gate = small_params.gate
        shifted = GateParams(gate.L_z, gate.R_z, gate.b_z + 7.5)
        base = gate_probs(gate, windows)
        moved = gate_probs(shifted, windows)
        np.testing.assert_allclose(moved, base, rtol=1e-12, atol=1e-15)
        np.testing.assert_array_equal(moved.argmax(axis=1), base.argmax(axis=1))


class TestLogNormal:
    """Tests for log-normal helpers."""

    def test_degenerate_limit(self):
        """Test (0, σ² → 0) gives mean 1 and variance 0."""
        mean, var = lognormal_moments(0.0, 1e-12)
        assert mean == pytest.approx(1.0)
        assert var == pytest.approx(0.0, abs=1e-11)

    def test_standard(self):
        """Test (0, 1) gives e^0.5 and (e - 1)e."""
        mean, var = lognormal_moments(0.0, 1.0)
        assert mean == pytest.approx(1.6487212707, rel=1e-9)
        assert var == pytest.approx(4.6707742705, rel=1e-9)

    def test_vectorized(self):
        """Test arrays in, arrays out."""
        mean, var = lognormal_moments(np.array([0.0, 1.0]), np.array([1.0, 0.25]))
        assert mean.shape == var.shape == (2,)
        assert mean[1] == pytest.approx(np.exp(1.125))

    def test_non_positive_variance(self):
        """Test σ² must be positive."""
        with pytest.raises(ValueError):
            lognormal_moments(0.0, 0.0)

    def test_overflow(self):
        """Test moments that overflow are reported."""
        with pytest.raises(LogNormalOverflow):
            lognormal_moments(400.0, 1.0)

    def test_logpdf(self):
        """Test ln f(1 | 0, 1) = -½ln(2π)."""
        assert lognormal_logpdf(1.0, 0.0, 1.0) == pytest.approx(-HALF_LOG_2PI, rel=1e-12)


class TestNllLoss:
    """Tests for the training objective."""

    def test_closed_form(self):
        """Test y = 1, μ = 0, σ² = 1 gives ½ln(2π)."""
        params = _single_source()
        inst = _instance([np.zeros((2, 3))])
        assert nll_loss(params, inst, 0.0) == pytest.approx(HALF_LOG_2PI, rel=1e-12)

    def test_zero_params_regularizer(self, small_dataset):
        """Test Θ = 0 makes the L2 term vanish."""
        params = zeros((2, 3), 3)
        assert nll_loss(params, small_dataset, 5.0) == nll_loss(params, small_dataset, 0.0)

    def test_batch_forms_agree(self, small_params, small_dataset):
        """Test a dataset and a list of its instances give the same loss."""
        part = small_dataset[:7]
        assert nll_loss(small_params, part, 0.1) == pytest.approx(
            nll_loss(small_params, list(part), 0.1), rel=1e-12
        )

    def test_l2_on_bias_flag(self, small_params, small_dataset):
        """Test excluding biases lowers the penalty."""
        with_bias = nll_loss(small_params, small_dataset, 1.0, l2_on_bias=True)
        without = nll_loss(small_params, small_dataset, 1.0, l2_on_bias=False)
        biases = np.where(bias_mask((2, 3), 3), small_params.flatten(), 0.0)
        assert with_bias - without == pytest.approx(float(biases @ biases), rel=1e-9)

    def test_non_positive_target(self):
        """Test y = 0 cannot be scored."""
        with pytest.raises(NonPositiveTarget):
            nll_loss(_single_source(), _instance([np.zeros((2, 3))], y=0.0), 0.0)

    def test_window_count_checked(self, small_params):
        """Test the number of windows must match S."""
        with pytest.raises(ShapeMismatch):
            nll_loss(small_params, _instance([np.zeros((2, 3))]), 0.0)

    def test_best_source_bound(self, small_params, dataset_factory):
        """Test each instance's NLL is at most a single source's NLL plus ln(1/p) of that source."""
        data = dataset_factory(15, (2, 3), 3)
        mu, sigma2, probs = component_moments(small_params, list(data.windows))
        single = -lognormal_logpdf(data.y[:, None], mu, sigma2)
        for i in range(len(data)):
            mixture = nll_loss(small_params, [data[i]], 0.0)
            best = int(np.argmin(single[i]))
            assert mixture <= single[i, best] - np.log(probs[i, best]) + 1e-10
            assert np.all(mixture <= single[i] - np.log(probs[i]) + 1e-10)


class TestLossGradient:
    """Tests for the analytic gradient."""

    def test_zero_params_regularizer_gradient(self, small_dataset):
        """Test the L2 gradient vanishes at Θ = 0."""
        params = zeros((2, 3), 3)
        g1 = loss_gradient(params, small_dataset, 3.0).flatten()
        g0 = loss_gradient(params, small_dataset, 0.0).flatten()
        np.testing.assert_array_equal(g1, g0)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_finite_differences(self, seed, dataset_factory):
        """Test every coordinate against central differences."""
        rng = np.random.default_rng(seed)
        params = random_params((2, 3), 4, rng, scale=0.4)
        batch = dataset_factory(8, (2, 3), 4)

        analytic = loss_gradient(params, batch, 0.1).flatten()
        numeric = fd_gradient(lambda p: nll_loss(p, batch, 0.1), params).flatten()
        assert gradient_rel_error(analytic, numeric) < 1e-5

    def test_shape_matches_params(self, small_params, small_dataset):
        """Test the gradient is congruent to the parameters."""
        grad = loss_gradient(small_params, small_dataset, 0.1)
        assert isinstance(grad, TmeParams)
        assert grad.dims == small_params.dims
        assert grad.h == small_params.h

    def test_duplicated_batch_doubles_gradient(self, small_params, small_dataset):
        """Test repeating every instance doubles the data-term gradient."""
        batch = list(small_dataset[:9])
        once = loss_gradient(small_params, batch, 0.0).flatten()
        twice = loss_gradient(small_params, batch + batch, 0.0).flatten()
        np.testing.assert_allclose(twice, 2.0 * once, rtol=1e-12, atol=1e-12)

    def test_detects_small_coordinate_error(self, small_params, dataset_factory):
        """Test a 1% error on the smallest partial is caught next to large ones."""
        batch = dataset_factory(8, (2, 3), 3)
        analytic = loss_gradient(small_params, batch, 0.1).flatten()
        numeric = fd_gradient(lambda p: nll_loss(p, batch, 0.1), small_params).flatten()
        assert gradient_rel_error(analytic, numeric) < 1e-5

        i = int(np.argmin(np.abs(numeric)))
        wrong = analytic.copy()
        wrong[i] += 0.01 * abs(numeric[i]) + 1e-6
        assert gradient_rel_error(wrong, numeric) > 1e-3
