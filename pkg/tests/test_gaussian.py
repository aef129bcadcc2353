"""Covariance-head assembly, Gaussian NLL against the dense-formula oracle,
and latent sampling moments."""

import math

import numpy as np
import pytest

from gustuq import autodiff as ad
from gustuq.errors import NumericError, ShapeError
from gustuq.gaussian import (
    LOG_2PI,
    GaussianPrediction,
    HeteroscedasticNllLoss,
    LatentDistribution,
    assemble_cholesky,
    nll_loss,
    raw_was_clamped,
    sample_gaussian,
    tri_size,
)


def dense_nll(y, mu, cov):
    """Oracle: the multivariate normal NLL via explicit determinant and
    inverse (never used by the implementation)."""
    y, mu = np.asarray(y), np.asarray(mu)
    l = y.size
    d = y - mu
    return 0.5 * (l * LOG_2PI + np.log(np.linalg.det(cov))
                  + d @ np.linalg.inv(cov) @ d)


class TestAssemble:
    def test_zero_raw_gives_identity(self):
        L = assemble_cholesky(np.zeros(6))
        np.testing.assert_array_equal(L, np.eye(3))
        np.testing.assert_array_equal(L @ L.T, np.eye(3))

    def test_log4_diagonal(self):
        raw = np.zeros(6)
        raw[0] = math.log(4.0)  # slot of L11
        L = assemble_cholesky(raw)
        assert L[0, 0] == pytest.approx(2.0, rel=1e-14)

    def test_random_raws_always_positive_definite(self):
        rng = np.random.default_rng(0)
        for _ in range(10_000):
            raw = rng.uniform(-5, 5, 6)
            L = assemble_cholesky(raw)
            cov = L @ L.T
            np.testing.assert_allclose(cov, cov.T, atol=1e-15)
            assert np.linalg.eigvalsh(cov).min() > 0.0

    def test_clamp_and_flag(self):
        raw = np.zeros(6)
        raw[0] = 100.0
        L = assemble_cholesky(raw)
        assert L[0, 0] == pytest.approx(np.exp(20.0))
        assert raw_was_clamped(raw)
        assert not raw_was_clamped(np.zeros(6))

    def test_wrong_size_rejected(self):
        with pytest.raises(ShapeError):
            assemble_cholesky(np.zeros(5))

    def test_layout_row_major(self):
        # (L11, L21, L22, L31, L32, L33); off-diagonals are copied directly
        raw = np.array([0.0, 1.0, 0.0, 2.0, 3.0, 0.0])
        L = assemble_cholesky(raw)
        expect = np.array([[1.0, 0.0, 0.0], [1.0, 1.0, 0.0], [2.0, 3.0, 1.0]])
        np.testing.assert_array_equal(L, expect)

    def test_prediction_from_raw(self):
        raw = np.concatenate([[0.1, 0.2, 0.3], np.zeros(6)])
        pred = GaussianPrediction.from_raw(raw)
        np.testing.assert_array_equal(pred.mean, [0.1, 0.2, 0.3])
        np.testing.assert_array_equal(pred.L, np.eye(3))
        assert not pred.clamped
        with pytest.raises(ShapeError):
            GaussianPrediction.from_raw(np.zeros(8))


class TestNll:
    def test_standard_normal_at_mean_3d(self):
        val = nll_loss(np.zeros(3), np.zeros(3), np.eye(3))
        assert val == pytest.approx(1.5 * LOG_2PI, abs=1e-12)
        assert val == pytest.approx(2.756815599614018, abs=1e-9)

    def test_one_dimensional_closed_form(self):
        val = nll_loss([1.0], [0.0], [[1.0]])
        assert val == pytest.approx(0.5 * LOG_2PI + 0.5, abs=1e-12)
        assert val == pytest.approx(1.4189385332046727, abs=1e-9)

    def test_random_against_dense_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(200):
            raw = rng.uniform(-2, 2, 6)
            L = assemble_cholesky(raw)
            y = rng.uniform(-2, 2, 3)
            mu = rng.uniform(-2, 2, 3)
            ours = nll_loss(y, mu, L)
            oracle = dense_nll(y, mu, L @ L.T)
            assert abs(ours - oracle) / abs(oracle) < 1e-10

    def test_singular_factor_rejected(self):
        L = np.eye(3)
        L[1, 1] = 1e-200
        with pytest.raises(NumericError):
            nll_loss(np.zeros(3), np.zeros(3), L)

    def test_dim_mismatch(self):
        with pytest.raises(ShapeError):
            nll_loss(np.zeros(3), np.zeros(2), np.eye(3))


class TestNllGradients:
    def setup_method(self):
        self.loss = HeteroscedasticNllLoss(latent_dim=3)
        rng = np.random.default_rng(11)
        self.raw = rng.uniform(-1, 1, (1, 9))
        self.y = rng.uniform(-1, 1, (1, 3))

    def _plain(self, raw):
        pred = GaussianPrediction.from_raw(raw[0])
        return nll_loss(self.y[0], pred.mean, pred.L)

    def test_matches_finite_differences(self):
        g = ad.gradient(lambda rv: self.loss.build(rv, self.y), self.raw)
        h = 1e-6
        fd = np.zeros_like(self.raw)
        for i in range(9):
            rp, rm = self.raw.copy(), self.raw.copy()
            rp[0, i] += h
            rm[0, i] -= h
            fd[0, i] = (self._plain(rp) - self._plain(rm)) / (2 * h)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6

    def test_batched_build_matches_rowwise_plain(self):
        rng = np.random.default_rng(12)
        raw = rng.uniform(-1, 1, (16, 9))
        y = rng.uniform(-1, 1, (16, 3))
        batched = self.loss.evaluate(raw, y)
        rowwise = np.mean([
            nll_loss(y[i], *(lambda p: (p.mean, p.L))(GaussianPrediction.from_raw(raw[i])))
            for i in range(16)
        ])
        assert batched == pytest.approx(rowwise, rel=1e-12)

    def test_minimized_over_mean_at_truth(self):
        raw = self.raw.copy()
        raw[0, :3] = self.y[0]  # mu = y
        g = ad.gradient(lambda rv: self.loss.build(rv, self.y), raw)
        np.testing.assert_allclose(g[0, :3], 0.0, atol=1e-12)

    def test_head_dim_guard(self):
        with pytest.raises(ShapeError):
            self.loss.evaluate(np.zeros((2, 3)), np.zeros((2, 3)))


class TestSampling:
    def test_zero_covariance_copies_mean(self):
        dist = LatentDistribution([1.0, -2.0, 0.5], np.zeros((3, 3)), "aleatoric")
        draws = sample_gaussian(dist, 64, np.random.default_rng(0))
        np.testing.assert_array_equal(draws, np.tile(dist.mean, (64, 1)))

    def test_standard_normal_moments(self):
        dist = LatentDistribution(np.zeros(3), np.eye(3), "aleatoric")
        draws = sample_gaussian(dist, 100_000, np.random.default_rng(1))
        assert np.all(np.abs(draws.mean(axis=0)) < 0.02)
        assert np.all(np.abs(draws.var(axis=0, ddof=1) - 1.0) < 0.05)

    def test_correlated_pair(self):
        cov = np.array([[1.0, 0.9], [0.9, 1.0]])
        dist = LatentDistribution(np.zeros(2), cov, "epistemic")
        draws = sample_gaussian(dist, 100_000, np.random.default_rng(2))
        corr = np.corrcoef(draws.T)[0, 1]
        assert abs(corr - 0.9) < 0.02

    def test_moment_recovery(self):
        rng = np.random.default_rng(3)
        L = assemble_cholesky(rng.uniform(-0.5, 0.5, 6))
        cov = L @ L.T
        cov = 0.5 * (cov + cov.T)
        mean = rng.uniform(-1, 1, 3)
        dist = LatentDistribution(mean, cov, "aleatoric")
        draws = sample_gaussian(dist, 200_000, rng)
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=0.02)
        np.testing.assert_allclose(np.cov(draws.T), cov, atol=0.03)

    def test_non_psd_rejected(self):
        with pytest.raises(NumericError):
            LatentDistribution(np.zeros(2), np.array([[1.0, 0.0], [0.0, -0.5]]),
                               "aleatoric")

    def test_asymmetry_rejected(self):
        with pytest.raises(NumericError):
            LatentDistribution(np.zeros(2), np.array([[1.0, 0.3], [0.1, 1.0]]),
                               "aleatoric")


def test_tri_size():
    assert [tri_size(l) for l in (1, 2, 3, 4)] == [1, 3, 6, 10]
