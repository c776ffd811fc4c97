"""Samplers: moments, covariance shaping, stream reproducibility."""

import math

import numpy as np
import pytest

from ggcgs.ring import l2_norm
from ggcgs.sampling import (
    CovarianceMatrix,
    DiscreteGaussianTable,
    NotPositiveDefiniteError,
    build_covariance,
    sample_challenge,
    sample_discrete_gaussian_1d,
    sample_discrete_gaussian_vec,
    sample_multivariate_gaussian,
    sample_multivariate_gaussian_batch,
    sample_truncated_cauchy,
    sample_uniform_eta,
    worker_rng,
)


def test_uniform_eta_support_and_moments():
    rng = worker_rng(10)
    draws = np.concatenate([sample_uniform_eta(64, 1, rng) for _ in range(4000)])
    assert set(np.unique(draws)) <= {-1, 0, 1}
    n = draws.size
    se = draws.std() / math.sqrt(n)
    assert abs(draws.mean()) <= 3 * se
    # variance b(b+1)/3 with b=1
    assert draws.var() == pytest.approx(2.0 / 3.0, rel=0.02)


def test_uniform_eta_zero():
    rng = worker_rng(11)
    assert not sample_uniform_eta(32, 0, rng).any()


def test_challenge_full_and_half():
    rng = worker_rng(12)
    c = sample_challenge(16, 16, rng)
    assert set(np.unique(c)) <= {0, 1}
    c_half = sample_challenge(16, 8, rng)
    assert not c_half[8:].any()
    draws = np.array([sample_challenge(16, 16, rng) for _ in range(20000)])
    means = draws.mean(axis=0)
    se = 0.5 / math.sqrt(20000)
    assert np.all(np.abs(means - 0.5) <= 4 * se)


def test_challenge_n2_all_outcomes_uniform():
    rng = worker_rng(13)
    draws = sample_challenge(2, 2, rng)  # warm-up draw, shape check
    assert draws.shape == (2,)
    outcomes = np.zeros(4)
    trials = 100_000
    bits = np.array([sample_challenge(2, 2, rng) for _ in range(trials)])
    codes = bits[:, 0] * 2 + bits[:, 1]
    for v in range(4):
        outcomes[v] = np.mean(codes == v)
    assert np.all(np.abs(outcomes - 0.25) <= 0.02 * 0.25 + 3 * math.sqrt(0.25 * 0.75 / trials))


def test_challenge_rejects_bad_active():
    with pytest.raises(ValueError):
        sample_challenge(16, 5, worker_rng(0))


def test_build_covariance_trivial_secret():
    s = np.zeros((1, 8), dtype=np.int64)
    s[0, 0] = 1
    cov = build_covariance(s, sigma=3.0, sigma_u=1.0)
    assert cov.is_pd
    assert np.allclose(cov.matrix, (9.0 - 1.0) * np.eye(8))
    # module variant doubles the subtracted block
    cov_m = build_covariance(s, sigma=3.0, sigma_u=1.0, variant="module")
    assert np.allclose(cov_m.matrix, (9.0 - 2.0) * np.eye(8))
    # positive definiteness flips exactly at sigma = sqrt(2) sigma_u
    assert not build_covariance(s, sigma=1.2, sigma_u=1.0, variant="module").is_pd


def test_covariance_cholesky_residual():
    rng = worker_rng(14)
    s = np.vstack([np.eye(1, 16, dtype=np.int64)[0][None, :],
                   rng.integers(-1, 2, size=(2, 16))])
    cov = build_covariance(s, sigma=20.0, sigma_u=1.0)
    assert cov.is_pd
    resid = np.max(np.abs(cov.chol @ cov.chol.T - cov.matrix))
    assert resid <= 1e-6 * np.max(np.abs(cov.matrix))
    assert np.allclose(cov.matrix, cov.matrix.T, rtol=1e-9)


def test_multivariate_rounding_variance():
    cov = CovarianceMatrix(dim=4, matrix=np.eye(4), chol=np.eye(4), is_pd=True, sigma=1.0)
    rng = worker_rng(15)
    draws = sample_multivariate_gaussian_batch(cov, 0.0, rng, 200_000)
    # rounding adds the uniform(-1/2, 1/2) variance 1/12
    assert draws.var(axis=0) == pytest.approx(1.0 + 1.0 / 12.0, rel=0.02)


def test_multivariate_center_and_scale():
    n = 4
    sigma = 15.0
    cov = CovarianceMatrix(dim=n, matrix=sigma**2 * np.eye(n),
                           chol=sigma * np.eye(n), is_pd=True, sigma=sigma)
    rng = worker_rng(16)
    center = np.array([7.0, 0.0, 0.0, 0.0])
    draws = sample_multivariate_gaussian_batch(cov, center, rng, 200_000)
    se = sigma / math.sqrt(draws.shape[0])
    assert abs(draws[:, 0].mean() - 7.0) <= 3 * se
    assert draws.var(axis=0) == pytest.approx(sigma**2, rel=0.01)


def test_multivariate_requires_pd():
    cov = CovarianceMatrix(dim=2, matrix=-np.eye(2))
    with pytest.raises(NotPositiveDefiniteError):
        sample_multivariate_gaussian(cov, 0.0, worker_rng(0))


def test_marginal_variance_matches_secret_norm():
    # block marginals of the shaped covariance: sigma^2 - sigma_u^2 ||s_i||^2
    rng = worker_rng(17)
    n, k = 16, 3
    s = np.vstack([np.eye(1, n, dtype=np.int64)[0][None, :], rng.integers(-1, 2, (k - 1, n))])
    cov = build_covariance(s, sigma=15.0, sigma_u=1.0)
    draws = sample_multivariate_gaussian_batch(cov, 0.0, rng, 300_000).reshape(-1, k, n)
    for i in range(k):
        want = 15.0**2 - float(np.dot(s[i], s[i])) + 1.0 / 12.0
        got = draws[:, i, :].var(axis=0).mean()
        assert got == pytest.approx(want, rel=0.02)


def test_discrete_gaussian_exact_table_moments():
    # the table IS the distribution: its pmf moments must match the ideal
    # integer Gaussian, and empirical draws must match the table
    tab = DiscreteGaussianTable(1.0, -0.5)
    assert tab.mean() == pytest.approx(-0.5, abs=1e-12)
    assert tab.variance() == pytest.approx(1.0, abs=1e-4)
    rng = worker_rng(18)
    draws = tab.sample(rng, 400_000)
    assert draws.mean() == pytest.approx(-0.5, abs=3 * draws.std() / math.sqrt(draws.size))
    assert draws.var() == pytest.approx(tab.variance(), rel=0.02)


def test_discrete_gaussian_1d_concentration():
    rng = worker_rng(19)
    draws = [sample_discrete_gaussian_1d(0.01, 3.0, rng) for _ in range(5000)]
    assert all(d == 3 for d in draws)


def test_discrete_gaussian_tail():
    rng = worker_rng(20)
    tab = DiscreteGaussianTable(1.0, 0.0)
    draws = tab.sample(rng, 2_000_000)
    assert not np.any(np.abs(draws) > 9.5)


def test_discrete_gaussian_vec_groups_centers():
    rng = worker_rng(21)
    centers = np.array([0.0, -0.5, 0.0, -0.5] * 2000)
    draws = sample_discrete_gaussian_vec(1.0, centers, rng)
    m0 = draws[centers == 0.0].mean()
    m1 = draws[centers == -0.5].mean()
    assert abs(m0) < 0.05 and abs(m1 + 0.5) < 0.05


def test_truncated_cauchy_moments():
    rng = worker_rng(22)
    alpha, beta, L = 0.0, 1.0, 50.0
    draws = sample_truncated_cauchy(alpha, beta, L, rng, 2_000_000)
    assert np.all(np.abs(draws - alpha) <= L)
    want_var = beta * L / math.atan(L / beta) - beta**2
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - alpha) <= 3 * se
    assert draws.var() == pytest.approx(want_var, rel=0.02)


def test_truncated_cauchy_large_L_quartiles():
    rng = worker_rng(23)
    draws = sample_truncated_cauchy(0.0, 1.0, 1e6, rng, 1_000_000)
    q25, q50, q75 = np.percentile(draws, [25, 50, 75])
    assert q25 == pytest.approx(-1.0, abs=0.01)
    assert q50 == pytest.approx(0.0, abs=0.01)
    assert q75 == pytest.approx(1.0, abs=0.01)


def test_worker_streams_reproducible_and_distinct():
    a1 = worker_rng(42, 0).standard_normal(16)
    a2 = worker_rng(42, 0).standard_normal(16)
    b = worker_rng(42, 1).standard_normal(16)
    c = worker_rng(43, 0).standard_normal(16)
    assert np.array_equal(a1, a2)
    assert not np.array_equal(a1, b)
    assert not np.array_equal(a1, c)
