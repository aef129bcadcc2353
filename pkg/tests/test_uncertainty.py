"""MC-dropout predictive distributions, sampling pushforward statistics,
pixel log-likelihood, and confidence ellipses, each against closed forms or
Monte Carlo oracles."""

import numpy as np
import pytest

from gustuq.errors import ContractError, DataMismatchError, ShapeError
from gustuq.gaussian import LatentDistribution
from gustuq.network import LayerSpec, Network, NetworkSpec, estimator_spec
from gustuq.uncertainty import (
    EllipseSpec,
    PredictiveEnsemble,
    aleatoric_distribution,
    avg_loglikelihood,
    confidence_ellipse,
    epistemic_distribution,
    mahalanobis_sq,
    mc_predict,
    reconstruct_stats,
)

CHI2_2_95 = 5.991464547107979


def prob_net(dropout, seed=0, din=6):
    return Network(estimator_spec(input_dim=din, latent_dim=3,
                                  probabilistic=True, dropout_rate=dropout),
                   rng=np.random.default_rng(seed))


class TestMcPredict:
    def test_no_dropout_all_passes_identical(self):
        net = prob_net(0.0)
        x = np.random.default_rng(1).uniform(-1, 1, 6)
        ens = mc_predict(net, x, 16, np.random.default_rng(2))
        assert np.all(ens.means == ens.means[0])
        assert np.all(ens.covariances == ens.covariances[0])

    def test_same_seed_identical_ensembles(self):
        net = prob_net(0.1)
        x = np.random.default_rng(1).uniform(-1, 1, 6)
        a = mc_predict(net, x, 32, np.random.default_rng(9))
        b = mc_predict(net, x, 32, np.random.default_rng(9))
        np.testing.assert_array_equal(a.means, b.means)
        np.testing.assert_array_equal(a.covariances, b.covariances)

    def test_trained_model_spread_positive_finite(self, tiny_dataset,
                                                  tiny_estimators):
        x = tiny_dataset.p_stacked[tiny_dataset.val_indices()[0]]
        ens = mc_predict(tiny_estimators["prob"], x, 100,
                         np.random.default_rng(3))
        spread = ens.means.std(axis=0)
        assert np.all(spread > 0.0)
        assert np.all(np.isfinite(ens.means))
        assert np.all(np.isfinite(ens.covariances))

    def test_deterministic_head_rejected(self):
        det = Network(estimator_spec(input_dim=6, latent_dim=3,
                                     probabilistic=False, dropout_rate=0.05),
                      rng=np.random.default_rng(0))
        with pytest.raises(DataMismatchError):
            mc_predict(det, np.zeros(6), 8, np.random.default_rng(0))

    def test_needs_two_passes(self):
        with pytest.raises(ContractError):
            mc_predict(prob_net(0.1), np.zeros(6), 1, np.random.default_rng(0))


def ensemble_from(means, covs):
    return PredictiveEnsemble(np.asarray(means, float), np.asarray(covs, float))


class TestAleatoric:
    def test_identical_entries_pass_through(self):
        mu = np.array([0.5, -1.0, 2.0])
        cov = np.diag([1.0, 2.0, 3.0])
        ens = ensemble_from([mu] * 4, [cov] * 4)
        dist = aleatoric_distribution(ens)
        np.testing.assert_array_equal(dist.mean, mu)
        np.testing.assert_array_equal(dist.covariance, cov)
        assert dist.kind == "aleatoric"

    def test_two_entry_average(self):
        ens = ensemble_from([np.zeros(3)] * 2, [np.eye(3), 3.0 * np.eye(3)])
        np.testing.assert_array_equal(aleatoric_distribution(ens).covariance,
                                      2.0 * np.eye(3))

    def test_random_matches_direct_average(self):
        rng = np.random.default_rng(5)
        mus = rng.uniform(-1, 1, (12, 3))
        ls = rng.uniform(0.2, 1.0, (12, 3))
        covs = np.array([np.diag(l**2) for l in ls])
        dist = aleatoric_distribution(ensemble_from(mus, covs))
        np.testing.assert_array_equal(dist.mean, mus.mean(axis=0))
        np.testing.assert_array_equal(dist.covariance, covs.mean(axis=0))


class TestEpistemic:
    def test_equal_means_zero_covariance(self):
        mu = np.array([1.0, 2.0, 3.0])
        ens = ensemble_from([mu] * 5, [np.eye(3)] * 5)
        dist = epistemic_distribution(ens)
        np.testing.assert_array_equal(dist.covariance, np.zeros((3, 3)))
        assert dist.kind == "epistemic"

    def test_two_point_sample_covariance(self):
        # means (0,0,0) and (2,0,0): unbiased covariance diag(2, 0, 0)
        ens = ensemble_from([[0.0, 0.0, 0.0], [2.0, 0.0, 0.0]],
                            [np.eye(3)] * 2)
        np.testing.assert_allclose(epistemic_distribution(ens).covariance,
                                   np.diag([2.0, 0.0, 0.0]), atol=1e-15)

    def test_random_against_numpy_cov(self):
        rng = np.random.default_rng(6)
        mus = rng.uniform(-2, 2, (40, 3))
        ens = ensemble_from(mus, [np.eye(3)] * 40)
        ours = epistemic_distribution(ens).covariance
        oracle = np.cov(mus.T, ddof=1)
        assert np.max(np.abs(ours - oracle)) / np.max(np.abs(oracle)) < 1e-12


class TestReconstructStats:
    def test_zero_covariance_reproduces_decode_of_mean(self):
        a = np.random.default_rng(0).uniform(-1, 1, (8, 3))

        def decoder(xi):
            fields = (xi @ a.T).reshape(-1, 2, 4)
            return fields, xi.sum(axis=1)

        mu = np.array([0.3, -0.2, 0.5])
        dist = LatentDistribution(mu, np.zeros((3, 3)), "aleatoric")
        stats = reconstruct_stats(dist, decoder, 50, np.random.default_rng(1))
        # identical samples: variance zero up to the rounding of the mean
        np.testing.assert_allclose(stats.pixel_var, 0.0, atol=1e-30)
        np.testing.assert_allclose(stats.pixel_mean,
                                   (a @ mu).reshape(2, 4), atol=1e-15)
        assert stats.lift_var <= 1e-30

    def test_identity_decoder_unit_variance(self):
        def decoder(xi):
            return xi.reshape(-1, 1, 3), xi[:, 0]

        dist = LatentDistribution(np.zeros(3), np.eye(3), "aleatoric")
        stats = reconstruct_stats(dist, decoder, 100_000,
                                  np.random.default_rng(2))
        assert np.all(np.abs(stats.pixel_var - 1.0) < 0.05)

    def test_linear_decoder_matches_analytic_pushforward(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(-1, 1, (6, 3))
        cov = np.array([[1.0, 0.3, 0.0], [0.3, 0.8, -0.2], [0.0, -0.2, 0.5]])

        def decoder(xi):
            return (xi @ a.T).reshape(-1, 2, 3), xi[:, 1]

        dist = LatentDistribution(np.array([0.1, 0.2, -0.1]), cov, "aleatoric")
        stats = reconstruct_stats(dist, decoder, 100_000, np.random.default_rng(4))
        expect = np.diag(a @ cov @ a.T).reshape(2, 3)
        assert np.all(np.abs(stats.pixel_var - expect) <= 0.05 * expect)

    def test_needs_two_samples(self):
        dist = LatentDistribution(np.zeros(3), np.eye(3), "aleatoric")
        with pytest.raises(ContractError):
            reconstruct_stats(dist, lambda xi: (xi.reshape(-1, 1, 3), xi[:, 0]),
                              1, np.random.default_rng(0))


class TestAvgLogLikelihood:
    def stats(self, mean, var):
        from gustuq.uncertainty import FieldStats

        mean = np.asarray(mean, float)
        return FieldStats(mean, np.asarray(var, float), 0.0, 0.0, 2)

    def test_single_pixel_standard_normal(self):
        val = avg_loglikelihood(self.stats([[0.0]], [[1.0]]), [[0.0]])
        assert val == pytest.approx(-0.9189385332046727, abs=1e-9)

    def test_two_pixel_average(self):
        val = avg_loglikelihood(self.stats([[0.0, 0.0]], [[1.0, 1.0]]),
                                [[0.0, 1.0]])
        assert val == pytest.approx((-0.918939 - 1.418939) / 2, abs=1e-5)
        assert val == pytest.approx(-1.1689385332046727, abs=1e-9)

    def test_variance_floor_keeps_value_finite(self):
        val = avg_loglikelihood(self.stats([[1.0]], [[0.0]]), [[1.0]])
        assert np.isfinite(val)
        assert val > 10.0  # -0.5 log(2 pi * 1e-12)

    def test_maximized_at_truth(self):
        rng = np.random.default_rng(8)
        mean = rng.uniform(-1, 1, (3, 4))
        var = rng.uniform(0.2, 1.0, (3, 4))
        at_truth = avg_loglikelihood(self.stats(mean, var), mean)
        for _ in range(10):
            off = mean + 0.3 * rng.standard_normal((3, 4))
            assert avg_loglikelihood(self.stats(mean, var), off) < at_truth

    def test_grid_mismatch(self):
        with pytest.raises(ShapeError):
            avg_loglikelihood(self.stats([[0.0]], [[1.0]]), [[0.0, 1.0]])


class TestConfidenceEllipse:
    def test_isotropic_circle(self):
        dist = LatentDistribution(np.zeros(3), np.eye(3), "aleatoric")
        spec = confidence_ellipse(dist, (0, 1))
        np.testing.assert_allclose(spec.semi_axes,
                                   np.sqrt(CHI2_2_95) * np.ones(2), rtol=1e-9)
        assert spec.semi_axes[0] == pytest.approx(2.4477, abs=2e-4)

    def test_diagonal_axes_and_angle(self):
        dist = LatentDistribution(np.zeros(3), np.diag([4.0, 1.0, 1.0]),
                                  "aleatoric")
        spec = confidence_ellipse(dist, (0, 1))
        np.testing.assert_allclose(
            spec.semi_axes, [2.0 * np.sqrt(CHI2_2_95), np.sqrt(CHI2_2_95)],
            rtol=1e-9)
        assert spec.angle == pytest.approx(0.0, abs=1e-12)

    def test_semi_axes_descending_and_angle_range(self):
        rng = np.random.default_rng(9)
        for _ in range(50):
            m = rng.uniform(-1, 1, (3, 3))
            cov = m @ m.T + 0.1 * np.eye(3)
            dist = LatentDistribution(rng.uniform(-1, 1, 3),
                                      0.5 * (cov + cov.T), "aleatoric")
            spec = confidence_ellipse(dist, (1, 2))
            assert spec.semi_axes[0] >= spec.semi_axes[1]
            assert 0.0 <= spec.angle < np.pi

    def test_monte_carlo_coverage(self):
        rng = np.random.default_rng(10)
        m = rng.uniform(-1, 1, (3, 3))
        cov = m @ m.T + 0.2 * np.eye(3)
        mean = np.array([0.5, -1.0, 0.25])
        dist = LatentDistribution(mean, 0.5 * (cov + cov.T), "aleatoric")
        draws = rng.multivariate_normal(mean, dist.covariance, size=100_000)
        for plane in ((0, 1), (0, 2), (1, 2)):
            spec = confidence_ellipse(dist, plane)
            frac = spec.contains(draws[:, list(plane)]).mean()
            assert 0.94 <= frac <= 0.96

    def test_epistemic_collapse_property(self, tiny_dataset, tiny_targets):
        # dropout rate 0: every pass equals the deterministic pass, so the
        # epistemic covariance vanishes identically
        net = prob_net(0.0, din=33)
        for row in tiny_dataset.val_indices()[:5]:
            ens = mc_predict(net, tiny_dataset.p_stacked[row], 50,
                             np.random.default_rng(11))
            dist = epistemic_distribution(ens)
            assert np.linalg.norm(dist.covariance, "fro") < 1e-12


class TestMahalanobis:
    def test_matches_direct_formula(self):
        rng = np.random.default_rng(12)
        m = rng.uniform(-1, 1, (3, 3))
        cov = m @ m.T + 0.3 * np.eye(3)
        dist = LatentDistribution(rng.uniform(-1, 1, 3), 0.5 * (cov + cov.T),
                                  "aleatoric")
        x = rng.uniform(-1, 1, 3)
        d = x - dist.mean
        expect = d @ np.linalg.inv(dist.covariance) @ d
        assert mahalanobis_sq(dist, x) == pytest.approx(expect, rel=1e-10)
