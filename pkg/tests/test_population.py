import numpy as np
import pytest

from emconv.core import derive_stream
from emconv.models import GaussianMixture, MissingCovariates, MixtureOfRegressions
from emconv.population import (ProbeSpec, draw_probes, estimate_concavity, estimate_conditions,
                               estimate_contraction, estimate_deviation, estimate_fos_gamma,
                               estimate_gs_gamma, estimate_sgd_variance, pop_operator)

from conftest import unit


def probe_for(model, radius, label, num_probes=20, mc_n=100_000, **kw):
    return ProbeSpec(radius, derive_stream(99, label), num_probes=num_probes, mc_n=mc_n, **kw)


class TestProbes:
    def test_sphere(self):
        theta_star = np.arange(4.0)
        probes = draw_probes(theta_star, probe_for(None, 0.7, "p"))
        np.testing.assert_allclose(np.linalg.norm(probes - theta_star, axis=1), 0.7)

    def test_ball(self):
        probes = draw_probes(np.zeros(3), probe_for(None, 2.0, "p", num_probes=500, style="ball"))
        r = np.linalg.norm(probes, axis=1)
        assert r.max() <= 2.0 and r.min() < 1.0

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ProbeSpec(1.0, derive_stream(0, "x"), mc_n=999)
        with pytest.raises(ValueError):
            ProbeSpec(0.0, derive_stream(0, "x"))


class TestPopOperator:
    def test_gmm_at_zero(self):
        model = GaussianMixture(2.0 * unit(5), 1.0)
        est, _ = pop_operator(model, np.zeros(5), "em", mc_n=10_000, rng=derive_stream(1, "z"))
        np.testing.assert_array_equal(est, np.zeros(5))

    @pytest.mark.parametrize("model", [GaussianMixture(2.0 * unit(10), 1.0),
                                       MixtureOfRegressions(2.0 * unit(10), 1.0),
                                       MissingCovariates(2.0 * unit(10), 1.0, 0.2)],
                             ids=["gmm", "mor", "missing"])
    def test_self_consistency(self, model):
        est, se = pop_operator(model, model.theta_star, "em", mc_n=10 ** 6,
                               rng=derive_stream(2, "self", hash(model.name) % 1000))
        assert np.linalg.norm(est - model.theta_star) <= 5 * se

    def test_mor_em_and_unit_gradient_agree(self):
        model = MixtureOfRegressions(2.0 * unit(10), 1.0)
        theta = model.theta_star + 0.3 * unit(10, 4)
        rng = derive_stream(3, "mor-pair")
        em, se_em = pop_operator(model, theta, "em", mc_n=100_000, rng=rng)
        gr, se_gr = pop_operator(model, theta, "grad", 1.0, mc_n=100_000, rng=rng)
        assert np.linalg.norm(em - gr) <= 5 * np.hypot(se_em, se_gr)

    def test_deterministic(self):
        model = GaussianMixture(unit(3), 1.0)
        a = pop_operator(model, np.ones(3), mc_n=5000, rng=derive_stream(4, "d"))
        b = pop_operator(model, np.ones(3), mc_n=5000, rng=derive_stream(4, "d"))
        np.testing.assert_array_equal(a[0], b[0])
        assert a[1] == b[1]


class TestContraction:
    def test_gmm_high_snr(self):
        model = GaussianMixture(5.0 * unit(10), 1.0)
        res = estimate_contraction(model, probe_for(model, 1.25, "c5", num_probes=50))
        assert res.max < 0.2

    def test_gmm_decreasing_in_snr(self):
        kappas = []
        for snr in (1.5, 2, 3, 5):
            model = GaussianMixture(snr * unit(10), 1.0)
            kappas.append(estimate_contraction(model, probe_for(model, snr / 4, "grid")).max)
        assert all(a > b for a, b in zip(kappas, kappas[1:]))

    def test_mor_half(self):
        model = MixtureOfRegressions(10.0 * unit(10), 1.0)
        res = estimate_contraction(model, probe_for(model, model.corollary_radius(), "mor"))
        assert res.max <= 0.5 + 3 * res.stderr

    def test_fos_bound_and_certification(self):
        model = GaussianMixture(5.0 * unit(10), 1.0)
        probe = probe_for(model, 1.25, "fos")
        lam, _, _ = estimate_concavity(model, rng=probe.rng)
        fos = estimate_fos_gamma(model, probe)
        kap = estimate_contraction(model, probe)
        assert fos.max < lam
        assert fos.max / lam >= kap.max - 3 * np.hypot(kap.stderr, fos.stderr)

    @pytest.mark.parametrize("model", [GaussianMixture(2.0 * unit(10), 1.0),
                                       MixtureOfRegressions(4.0 * unit(10), 1.0)],
                             ids=["gmm", "mor"])
    def test_gradient_operator_bound(self, model):
        probe = probe_for(model, model.corollary_radius(), "gs-bound")
        lam, mu, se_h = estimate_concavity(model, rng=probe.rng.child("mc"))
        gs = estimate_gs_gamma(model, probe)
        kap = estimate_contraction(model, probe, "grad", 2.0 / (lam + mu))
        bound = 1 - 2 * (lam - gs.max) / (lam + mu)
        assert kap.max <= bound + 5 * np.sqrt(kap.stderr ** 2 + gs.stderr ** 2 + se_h ** 2)


class TestStability:
    def test_probe_at_fixed_point(self):
        model = GaussianMixture(2.0 * unit(4), 1.0)
        probe = probe_for(model, 0.5, "fp", mc_n=1000)
        at_star = model.theta_star[None]
        assert estimate_fos_gamma(model, probe, probes=at_star).max == 0.0
        assert estimate_gs_gamma(model, probe, probes=at_star).max == 0.0

    def test_gmm_fos_equals_gs(self):
        model = GaussianMixture(2.0 * unit(10), 1.0)
        probe = probe_for(model, 0.5, "same")
        fos = estimate_fos_gamma(model, probe)
        gs = estimate_gs_gamma(model, probe)
        np.testing.assert_allclose(fos.ratios, gs.ratios, rtol=0, atol=1e-12)

    def test_missing_gs_below_lambda(self):
        model = MissingCovariates(1.0 * unit(10), 1.0, 0.05, zeta2=0.5)
        omega_max, _ = model.prob_bound()
        assert model.omega < omega_max
        gs = estimate_gs_gamma(model, probe_for(model, 0.5, "miss-gs"))
        assert gs.max < 1


class TestConcavity:
    def test_gmm_exact(self):
        lam, mu, se = estimate_concavity(GaussianMixture(unit(5), 1.0), 1000, derive_stream(0, "h"))
        assert (lam, mu, se) == (1.0, 1.0, 0.0)

    @pytest.mark.parametrize("model", [MixtureOfRegressions(2.0 * unit(10), 1.0),
                                       MissingCovariates(2.0 * unit(10), 1.0, 0.2)],
                             ids=["mor", "missing"])
    def test_near_identity(self, model):
        lam, mu, se = estimate_concavity(model, 100_000, derive_stream(0, "h", 1))
        assert lam <= mu
        assert abs(lam - 1) <= 5 * se and abs(mu - 1) <= 5 * se


class TestDeviation:
    def test_same_stream_same_size_is_zero(self):
        model = GaussianMixture(2.0 * unit(5), 1.0)
        probe = probe_for(model, 0.5, "dev0", num_probes=5, mc_n=2000)
        dev = estimate_deviation(model, 2000, probe, rep_streams=[probe.rng])
        assert dev.max_dev == 0.0

    def test_shrinks_with_n(self):
        model = GaussianMixture(2.0 * unit(10), 1.0)
        probe = probe_for(model, 0.5, "dev", mc_n=400_000)
        small = estimate_deviation(model, 1000, probe, reps=5)
        large = estimate_deviation(model, 4000, probe, reps=5)
        assert small.max_dev >= small.quantile95 >= 0
        violations = np.sum(large.deviations.max(axis=1) > small.deviations.max(axis=1))
        assert violations <= 1
        assert 0.3 <= large.max_dev / small.max_dev <= 0.8


class TestSgdVariance:
    def test_nonnegative_at_theta_star(self):
        model = GaussianMixture(2.0 * unit(5), 1.0)
        probe = probe_for(model, 0.5, "v0", mc_n=1000)
        val, se = estimate_sgd_variance(model, probe, probes=model.theta_star[None])
        assert val >= 0 and se >= 0

    def test_mor_scales_with_dimension(self):
        vals = []
        for d in (5, 10):
            model = MixtureOfRegressions(2.0 * unit(d), 1.0)
            vals.append(estimate_sgd_variance(model, probe_for(model, model.corollary_radius(),
                                                               "vd"))[0])
        assert 1.5 <= vals[1] / vals[0] <= 2.8

    def test_missing_without_missingness_matches_brute_force(self):
        model = MissingCovariates(2.0 * unit(10), 1.0, 0.0)
        theta = model.theta_star + 0.5 * unit(10, 8)
        val, se = estimate_sgd_variance(model, probe_for(model, 0.5, "vm"), probes=theta[None])
        gen = np.random.default_rng(12345)
        x = gen.standard_normal((100_000, 10))
        y = x @ model.theta_star + gen.standard_normal(100_000)
        sq = np.sum(((y - x @ theta)[:, None] * x) ** 2, axis=1)
        brute_se = sq.std(ddof=1) / np.sqrt(sq.size)
        assert abs(val - sq.mean()) <= 5 * np.hypot(se, brute_se)


def test_conditions_record():
    model = GaussianMixture(2.0 * unit(5), 1.0)
    est = estimate_conditions(model, probe_for(model, 0.5, "all", num_probes=10, mc_n=10_000))
    assert est.lam <= est.mu
    assert est.xi == pytest.approx(2 * est.lam * est.mu / (est.lam + est.mu) - est.gamma_gs)
    assert set(est.stderr) == {"hessian", "gamma_fos", "gamma_gs", "kappa", "sigma_g_sq"}
    assert all(np.isfinite([est.lam, est.mu, est.gamma_fos, est.kappa, est.sigma_g_sq]))
