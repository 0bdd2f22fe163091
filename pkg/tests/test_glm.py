import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from bmr import (FitError, GaussianDensity, GLMModel, fit_glm, glm_log_evidence_fixed_lambda,
                 orthogonal_design, reduce_gaussian, simulate_glm)
from bmr.fit import LambdaUpdate

import helpers


def _model(X, var=1.0):
    return GLMModel(X, GaussianDensity(np.zeros(X.shape[1]), cov=var * np.eye(X.shape[1])))


class TestSimulate:
    def test_noiseless_limit(self):
        X = orthogonal_design(12, 4, 0)
        theta = np.arange(4.0)
        assert np.array_equal(simulate_glm(X, theta, -np.inf, 0), X @ theta)

    def test_identity_design(self):
        assert np.array_equal(simulate_glm(np.eye(2), [1.0, 0.0], -np.inf, 5), [1.0, 0.0])

    def test_noise_variance(self):
        X = np.ones((10_000, 1))
        y = simulate_glm(X, [2.0], np.log(0.3), seed=7)
        assert np.var(y - 2.0) == pytest.approx(0.3, rel=0.05)

    def test_deterministic(self):
        X = orthogonal_design(8, 3, 1)
        assert np.array_equal(simulate_glm(X, [1, 2, 3], 0.0, 4), simulate_glm(X, [1, 2, 3], 0.0, 4))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            simulate_glm(np.eye(3), [1.0, 2.0], 0.0, 1)

    def test_orthonormal_design(self):
        X = orthogonal_design(64, 20, 3)
        assert np.allclose(X.T @ X, np.eye(20), atol=1e-12)


class TestEvidence:
    def test_scalar_example(self):
        ev = glm_log_evidence_fixed_lambda([1.0], [[1.0]], GaussianDensity([0.0], cov=[[1.0]]), 0.0)
        assert ev == pytest.approx(norm.logpdf(1.0, 0.0, np.sqrt(2.0)), abs=1e-12)

    def test_prior_prediction_is_the_mode(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 3))
        prior = helpers.random_gaussian(rng, 3)
        best = glm_log_evidence_fixed_lambda(X @ prior.mean, X, prior, -1.0)
        for _ in range(20):
            y = X @ prior.mean + 0.1 * rng.standard_normal(6)
            assert glm_log_evidence_fixed_lambda(y, X, prior, -1.0) < best

    @given(st.integers(0, 2 ** 32 - 1))
    def test_difference_equals_kernel(self, seed):
        rng = np.random.default_rng(seed)
        n, N, lam = int(rng.integers(1, 8)), int(rng.integers(2, 20)), rng.uniform(-2, 1)
        X = rng.standard_normal((N, n))
        y = rng.standard_normal(N)
        prior = helpers.random_gaussian(rng, n)
        reduced = GaussianDensity(prior.mean * 0.5,
                                  precision=prior.precision + helpers.random_spd(rng, n))
        post = fit_glm(y, GLMModel(X, prior), fixed_lambda=lam).posterior
        diff = (glm_log_evidence_fixed_lambda(y, X, reduced, lam)
                - glm_log_evidence_fixed_lambda(y, X, prior, lam))
        assert reduce_gaussian(prior, post, reduced).delta_f == pytest.approx(diff, abs=1e-8)


class TestFit:
    def test_fixed_lambda_identity_example(self):
        fit = fit_glm([1.0, 0.0], _model(np.eye(2)), fixed_lambda=0.0)
        assert np.allclose(fit.posterior.mean, [0.5, 0.0], atol=1e-12)
        assert np.allclose(fit.posterior.cov, 0.5 * np.eye(2), atol=1e-12)
        assert fit.lambda_posterior is None

    @given(st.integers(0, 2 ** 32 - 1))
    def test_fixed_lambda_is_conjugate(self, seed):
        rng = np.random.default_rng(seed)
        n, N, lam = int(rng.integers(1, 8)), int(rng.integers(2, 30)), rng.uniform(-3, 2)
        X = rng.standard_normal((N, n))
        y = rng.standard_normal(N)
        prior = helpers.random_gaussian(rng, n)
        fit = fit_glm(y, GLMModel(X, prior), fixed_lambda=lam)
        exact = helpers.linear_gaussian_posterior(prior, X, y, np.exp(lam))
        assert np.allclose(fit.posterior.mean, exact.mean, atol=1e-8)
        assert np.allclose(fit.posterior.cov, exact.cov, atol=1e-8)
        # with known noise the free energy is the exact log evidence
        assert fit.free_energy == pytest.approx(
            helpers.log_marginal_gaussian(prior, X, y, np.exp(lam)), abs=1e-8)

    def test_zero_noise_vague_prior_recovers_least_squares(self):
        X = orthogonal_design(64, 20, 3)
        theta = np.random.default_rng(0).standard_normal(20)
        fit = fit_glm(X @ theta, _model(X, 1e6))
        ls = np.linalg.lstsq(X, X @ theta, rcond=None)[0]
        assert np.max(np.abs(fit.posterior.mean - ls)) < 1e-3

    @given(st.integers(0, 2 ** 32 - 1))
    def test_trajectory_monotone(self, seed):
        rng = np.random.default_rng(seed)
        N, n = int(rng.integers(3, 40)), int(rng.integers(1, 6))
        X = rng.standard_normal((N, n))
        y = X @ rng.standard_normal(n) * rng.uniform(0, 3) + np.exp(rng.uniform(-3, 2)) * rng.standard_normal(N)
        fit = fit_glm(y, _model(X))
        assert np.all(np.diff(fit.trajectory) >= -1e-6)
        assert fit.free_energy == fit.trajectory[-1]

    @given(st.integers(0, 2 ** 32 - 1))
    def test_accuracy_minus_complexity(self, seed):
        rng = np.random.default_rng(seed)
        N, n = int(rng.integers(3, 40)), int(rng.integers(1, 6))
        X = rng.standard_normal((N, n))
        y = X @ rng.standard_normal(n) + 0.5 * rng.standard_normal(N)
        prior = helpers.random_gaussian(rng, n)
        fit = fit_glm(y, GLMModel(X, prior))
        mu, C = fit.posterior.mean, fit.posterior.cov
        m, s = fit.lambda_posterior.mean[0], fit.lambda_posterior.cov[0, 0]
        # E_Q[ln N(y; X theta, e^lambda I)] with E[e^-lambda] the log-normal mean
        r = y - X @ mu
        accuracy = (-0.5 * N * np.log(2 * np.pi) - 0.5 * N * m
                    - 0.5 * np.exp(-m + s / 2) * (r @ r + np.trace(X.T @ X @ C)))
        Pi = np.linalg.inv(prior.cov)
        d = mu - prior.mean
        kl_theta = 0.5 * (np.trace(Pi @ C) + d @ Pi @ d - n
                          + np.linalg.slogdet(prior.cov)[1] - np.linalg.slogdet(C)[1])
        kl_lambda = 0.5 * (s + m ** 2 - 1.0 - np.log(s))
        assert fit.free_energy == pytest.approx(accuracy - kl_theta - kl_lambda, abs=1e-6)

    @pytest.mark.parametrize("seed", range(5))
    def test_zero_regressor_adds_no_evidence(self, seed):
        X = orthogonal_design(32, 5, seed)
        y = simulate_glm(X, np.arange(1.0, 6.0), -2.0, seed)
        base = fit_glm(y, _model(X))
        X0 = np.column_stack([X, np.zeros(32)])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            padded = fit_glm(y, _model(X0))
        assert padded.diagnostics["rank_deficient"]
        assert padded.free_energy <= base.free_energy + 1e-3

    def test_rank_deficiency_warns(self):
        X = np.column_stack([np.ones(5), np.ones(5)])
        with pytest.warns(RuntimeWarning, match="rank deficient"):
            fit_glm(np.arange(5.0), _model(X))

    def test_full_model_beats_intercept_only(self):
        X = orthogonal_design(64, 20, 1)
        theta = np.zeros(20)
        theta[:10] = np.random.default_rng(1).standard_normal(10)
        y = simulate_glm(X, theta, -8.0, 1)
        full = fit_glm(y, _model(X))
        intercept = fit_glm(y, _model(np.ones((64, 1))))
        assert full.free_energy > intercept.free_energy

    def test_non_finite_data(self):
        with pytest.raises(FitError):
            fit_glm([1.0, np.nan], _model(np.eye(2)))

    def test_divergent_lambda_carries_trajectory(self):
        X = np.ones((200, 1))
        y = 1e30 * np.random.default_rng(0).standard_normal(200)
        with pytest.raises(FitError) as info:
            fit_glm(y, _model(X))
        assert "diverged" in str(info.value)
        assert isinstance(info.value.trajectory, list)

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            fit_glm(np.zeros(3), _model(np.eye(2)))


class TestLambdaUpdate:
    @given(st.integers(1, 500), st.floats(1e-8, 1e8))
    def test_step_never_decreases_objective(self, n, R):
        lam = LambdaUpdate(GaussianDensity([0.0], cov=[[1.0]]))
        before = lam.objective(lam.m, lam.s, n, R)
        after = lam.step(n, R)
        assert after >= before - 1e-12
        assert lam.s > 0

    def test_reaches_stationary_point(self):
        lam = LambdaUpdate(GaussianDensity([0.0], cov=[[1.0]]))
        lam.step(100, 100 * np.exp(-6.0))
        h = 1e-6
        g = (lam.objective(lam.m + h, lam.s, 100, 100 * np.exp(-6.0))
             - lam.objective(lam.m - h, lam.s, 100, 100 * np.exp(-6.0))) / (2 * h)
        assert abs(g) < 1e-4
