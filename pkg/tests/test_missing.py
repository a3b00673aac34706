import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from emconv.core import NotPositiveDefinite
from emconv.models import (MissingCovariates, MissingData, impute_moments, missing_m_step,
                           missing_prob_bound, missing_q_grad, missing_q_value, missing_sample)

from conftest import central_diff, unit


def random_instance(seed, d=4, n=40, omega=0.3):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, d))
    mask = rng.random((n, d)) >= omega
    y = x @ rng.standard_normal(d) + rng.standard_normal(n)
    data = MissingData(np.where(mask, x, 0.0), mask, y)
    return data, rng.standard_normal(d), rng.standard_normal(d), 0.5 + rng.random()


def block_form(theta, x, mask, y, sigma):
    """Moments with the missing coordinates permuted to the front."""
    mis, obs = np.flatnonzero(~mask), np.flatnonzero(mask)
    perm = np.concatenate([mis, obs])
    th_mis, th_obs, x_obs = theta[mis], theta[obs], x[obs]
    scale = (y - th_obs @ x_obs) / (sigma ** 2 + th_mis @ th_mis)
    mu_mis = scale * th_mis
    k = len(mis)
    S = np.empty((len(theta), len(theta)))
    S[:k, :k] = np.eye(k)
    S[:k, k:] = np.outer(mu_mis, x_obs)
    S[k:, :k] = S[:k, k:].T
    S[k:, k:] = np.outer(x_obs, x_obs)
    inv = np.argsort(perm)
    mu = np.concatenate([mu_mis, x_obs])[inv]
    return mu, S[np.ix_(inv, inv)]


def conditional_second_moment(theta, x, mask, y, sigma):
    """E[x x^T | x_obs, y] by Gaussian conditioning on the joint of (x_mis, y)."""
    mis = np.flatnonzero(~mask)
    th_mis = theta[mis]
    cov_xy = th_mis
    var_y = sigma ** 2 + th_mis @ th_mis
    shift = y - theta[mask] @ x[mask]
    cond_mean = cov_xy * shift / var_y
    cond_cov = np.eye(len(mis)) - np.outer(cov_xy, cov_xy) / var_y
    mu = x.copy()
    mu[mis] = cond_mean
    S = np.outer(mu, mu)
    S[np.ix_(mis, mis)] += cond_cov
    return S


class TestSample:
    def test_no_missing(self, stream):
        data = missing_sample(np.ones(3), 1.0, 0.0, 100, stream)
        assert data.mask.all()

    def test_missing_fraction(self, stream):
        data = missing_sample(np.ones(10), 1.0, 0.2, 10 ** 4, stream)
        assert abs((~data.mask).mean() - 0.2) <= 0.01
        assert np.all(data.x[~data.mask] == 0.0)

    def test_almost_all_missing(self, stream):
        data = missing_sample(np.ones(10), 1.0, 0.99, 10 ** 4, stream)
        assert abs((~data.mask).mean() - 0.99) <= 0.005

    def test_response_ignores_mask(self, stream):
        theta = np.array([1.0, -1.0])
        a = missing_sample(theta, 1.0, 0.0, 50, stream)
        b = missing_sample(theta, 1.0, 0.5, 50, stream)
        np.testing.assert_array_equal(a.y, b.y)

    def test_bad_omega(self, stream):
        with pytest.raises(ValueError):
            missing_sample(np.ones(2), 1.0, 1.0, 5, stream)

    def test_nonzero_hidden_value_rejected(self):
        with pytest.raises(ValueError):
            MissingData(np.ones((1, 2)), np.array([[True, False]]), np.ones(1))


class TestImpute:
    def test_fully_observed(self):
        x = np.array([1.0, -2.0, 0.5])
        mom = impute_moments(np.ones(3), x, np.ones(3, bool), 4.0, 1.0)
        np.testing.assert_array_equal(mom.mu, x)
        np.testing.assert_allclose(mom.sigma_mat, np.outer(x, x))

    def test_hand_value_scalar(self):
        mom = impute_moments(np.array([1.0]), np.zeros(1), np.zeros(1, bool), 2.0, 1.0)
        np.testing.assert_allclose(mom.mu, [1.0])
        np.testing.assert_allclose(mom.sigma_mat, [[1.0]])

    def test_all_missing_zero_theta(self):
        mom = impute_moments(np.zeros(3), np.zeros(3), np.zeros(3, bool), 5.0, 1.0)
        np.testing.assert_array_equal(mom.mu, np.zeros(3))
        np.testing.assert_array_equal(mom.sigma_mat, np.eye(3))

    def test_matches_block_form(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            d = int(rng.integers(1, 8))
            theta = rng.standard_normal(d) * 2
            mask = rng.random(d) < 0.5
            x = np.where(mask, rng.standard_normal(d), 0.0)
            y, sigma = 3 * rng.standard_normal(), 0.3 + rng.random()
            mom = impute_moments(theta, x, mask, y, sigma)
            mu, S = block_form(theta, x, mask, y, sigma)
            np.testing.assert_allclose(mom.mu, mu, rtol=0, atol=1e-12)
            np.testing.assert_allclose(mom.sigma_mat, S, rtol=0, atol=1e-12)

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=100, deadline=None)
    def test_block_invariants(self, seed):
        rng = np.random.default_rng(seed)
        d = 5
        theta, mask = rng.standard_normal(d), rng.random(d) < 0.5
        x = np.where(mask, rng.standard_normal(d), 0.0)
        S = impute_moments(theta, x, mask, rng.standard_normal(), 1.0).sigma_mat
        np.testing.assert_array_equal(S, S.T)
        np.testing.assert_allclose(S[np.ix_(mask, mask)], np.outer(x[mask], x[mask]), atol=1e-14)
        np.testing.assert_allclose(S[np.ix_(~mask, ~mask)], np.eye(int((~mask).sum())), atol=1e-14)

    @pytest.mark.parametrize("seed", range(20))
    def test_exact_variant_matches_gaussian_conditioning(self, seed):
        rng = np.random.default_rng(seed)
        d = 6
        theta, mask = rng.standard_normal(d), rng.random(d) < 0.5
        x = np.where(mask, rng.standard_normal(d), 0.0)
        y = rng.standard_normal()
        S = impute_moments(theta, x, mask, y, 0.7, second_moment="exact").sigma_mat
        np.testing.assert_allclose(S, conditional_second_moment(theta, x, mask, y, 0.7),
                                   rtol=0, atol=1e-12)


class TestMStep:
    def test_no_missing_is_ols(self, stream):
        model = MissingCovariates(2.0 * unit(5), 1.0, 0.0)
        data = model.sample(200, stream)
        expect = np.linalg.lstsq(data.x, data.y, rcond=None)[0]
        np.testing.assert_allclose(model.m_step(data, np.ones(5)), expect, rtol=0, atol=1e-10)

    def test_all_missing_zero_theta(self):
        data = MissingData(np.zeros((10, 3)), np.zeros((10, 3), bool), np.arange(10.0))
        np.testing.assert_array_equal(missing_m_step(data, np.zeros(3), 1.0), np.zeros(3))

    @pytest.mark.parametrize("second_moment", ["paper", "exact"])
    @pytest.mark.parametrize("seed", range(10))
    def test_stationary(self, seed, second_moment):
        data, _, th, sigma = random_instance(seed, n=400, omega=0.1)
        g = missing_q_grad(data, missing_m_step(data, th, sigma, second_moment), th, sigma,
                           second_moment)
        assert np.abs(g).max() <= 1e-10 * (1 + np.abs(data.y).max())

    def test_grid_maximizer(self):
        data, _, _, _ = random_instance(5, d=1, n=30)
        theta = np.array([0.8])
        grid = np.linspace(-5, 5, 100001)
        values = [missing_q_value(data, np.array([g]), theta, 1.0) for g in grid]
        assert abs(grid[int(np.argmax(values))] - missing_m_step(data, theta, 1.0)[0]) <= 1e-4

    @given(st.integers(0, 10 ** 6))
    @settings(max_examples=50, deadline=None)
    def test_ascent(self, seed):
        data, _, th, sigma = random_instance(seed)
        try:
            new = missing_m_step(data, th, sigma)
        except NotPositiveDefinite:
            assume(False)
        before = missing_q_value(data, th, th, sigma)
        assert missing_q_value(data, new, th, sigma) >= before - 1e-12 * abs(before)


class TestGradient:
    @pytest.mark.parametrize("second_moment", ["paper", "exact"])
    @pytest.mark.parametrize("seed", range(10))
    def test_matches_finite_differences(self, seed, second_moment):
        data, tp, th, sigma = random_instance(seed)
        fd = central_diff(lambda v: missing_q_value(data, v, th, sigma, second_moment), tp)
        g = missing_q_grad(data, tp, th, sigma, second_moment)
        assert np.linalg.norm(g - fd) <= 1e-6 * max(np.linalg.norm(g), 1.0)

    @pytest.mark.parametrize("second_moment", ["paper", "exact"])
    def test_per_sample_gradients(self, second_moment):
        data, tp, th, sigma = random_instance(3)
        model = MissingCovariates(np.ones(4), sigma, 0.3, second_moment)
        np.testing.assert_allclose(model.sample_grads(data, tp, th).mean(axis=0),
                                   model.q_grad(data, tp, th), atol=1e-12)


class TestProbBound:
    def test_hand_value(self):
        # zeta1 + zeta2 = 1 gives b = 1 and omega_max = 1 / 5
        omega_max, kappa = missing_prob_bound(0.5, 0.5, 0.1)
        assert omega_max == pytest.approx(0.2)
        assert kappa == pytest.approx((1 + 0.1 * 5) / 2)

    def test_vanishing_signal(self):
        omega_max, _ = missing_prob_bound(1e-8, 1e-8, 0.0)
        assert omega_max == pytest.approx(1.0, abs=1e-12)

    def test_no_missingness(self):
        b = (1.2 + 0.3) ** 2
        assert missing_prob_bound(1.2, 0.3, 0.0)[1] == pytest.approx(b / (1 + b))

    @given(st.floats(0.01, 5), st.floats(0.01, 5), st.floats(0, 0.99))
    def test_kappa_below_one_iff_below_bound(self, z1, z2, omega):
        omega_max, kappa = missing_prob_bound(z1, z2, omega)
        if abs(omega - omega_max) > 1e-9:
            assert (kappa < 1) == (omega < omega_max)

    def test_rejects_nonpositive(self):
        with pytest.raises(ValueError):
            missing_prob_bound(0.0, 1.0, 0.1)


def test_model_defaults():
    model = MissingCovariates(2.0 * unit(3), 1.0, 0.005, zeta2=0.5)
    assert model.corollary_radius() == 0.5
    omega_max, kappa = model.prob_bound()
    assert omega_max == pytest.approx(missing_prob_bound(2.0, 0.5, 0.005)[0])
    assert kappa < 1
    assert model.default_xi() == pytest.approx(1 - kappa)
    assert MissingCovariates(2.0 * unit(3), 1.0, 0.2).default_xi() == 1.0
    with pytest.raises(ValueError):
        MissingCovariates(np.ones(2), 1.0, 0.1, second_moment="other")
