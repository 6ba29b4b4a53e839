import math

import numpy as np
import pytest
from scipy import stats

from gevpost.estimation import fit
from gevpost.gev_core import GevParams, Sample, gev_sample, omega_contains, rng_from_seed
from gevpost.likelihood import log_likelihood
from gevpost.mcmc import (
    Chain,
    NoStartingPoint,
    _log_lik_scalar,
    adaptive_rwm,
    effective_sample_size,
    sample_posterior,
    standardize_draws,
)
from gevpost.posterior_normal import LaplaceFit, laplace_fit
from gevpost.priors import flat, log_prior, normal


@pytest.fixture(scope="module")
def run1000():
    s = gev_sample(GevParams(1, 0, 0.2), 1000, seed=0)
    f = fit(s)
    return s, f, sample_posterior(s, flat(), 60_000, 10_000, seed=1, fit=f)


def test_acceptance_in_band(run1000):
    _, _, c = run1000
    assert 0.1 <= c.acceptance_rate <= 0.5
    assert len(c) == 50_000


def test_posterior_mean_near_mle(run1000):
    _, f, c = run1000
    mean = c.draws.mean(axis=0)
    sd = c.draws.std(axis=0)
    assert np.all(np.abs(mean - f.theta_hat.as_array()) < 3 * sd)


def test_chain_stays_in_support(run1000):
    s, _, c = run1000
    assert all(p.in_theta and omega_contains(p, s) for p in c.params()[::50])
    tau, mu, xi = c.draws.T
    w_min = np.min(1 + xi[:, None] * (s.values[[0, -1]][None, :] - mu[:, None]) / tau[:, None], axis=1)
    assert np.all(tau > 0) and np.all(xi > -0.5) and np.all(w_min > 0)


def test_log_posts_match_target(run1000):
    s, _, c = run1000
    for k in range(0, len(c), 9973):
        p = GevParams.from_array(c.draws[k])
        assert c.log_posts[k] == pytest.approx(log_likelihood(p, s) + log_prior(flat(), p), abs=1e-8)


def test_determinism():
    s = gev_sample(GevParams(1, 0, 0.3), 200, seed=2)
    a = sample_posterior(s, flat(), 3000, 1000, seed=5)
    b = sample_posterior(s, flat(), 3000, 1000, seed=5)
    assert np.array_equal(a.draws, b.draws) and np.array_equal(a.log_posts, b.log_posts)
    c = sample_posterior(s, flat(), 3000, 1000, seed=6)
    assert not np.array_equal(a.draws, c.draws)


def test_standardized_mean_vanishes():
    # the posterior mean sits O(n^-1/2) from theta_hat in standardized units
    # (about 0.1 for tau at n = 1000), so the CLT band is checked at large n
    s = gev_sample(GevParams(1, 0, 0.2), 16_000, seed=0)
    f = fit(s)
    c = sample_posterior(s, flat(), 110_000, 10_000, seed=1, fit=f)
    z = standardize_draws(c, laplace_fit(f, flat()))
    ess = effective_sample_size(z)
    assert np.all(np.abs(z.mean(axis=0)) < 4 / np.sqrt(ess))


def test_self_standardization(run1000):
    _, f, c = run1000
    cov = np.cov(c.draws.T)
    prec = np.linalg.inv(cov)
    chol = np.linalg.cholesky(prec)
    lf = LaplaceFit(GevParams.from_array(c.draws.mean(axis=0)), prec, 0.0, cov, chol)
    z = standardize_draws(c, lf)
    assert np.allclose(np.cov(z.T), np.eye(3), atol=1e-10)


@pytest.mark.slow
def test_standardized_covariance_n2000():
    s = gev_sample(GevParams(1, 0, 0.2), 2000, seed=3)
    f = fit(s)
    c = sample_posterior(s, flat(), 120_000, 20_000, seed=2, fit=f)
    z = standardize_draws(c, laplace_fit(f, flat()))
    assert np.allclose(np.cov(z.T), np.eye(3), atol=0.1)


def test_gaussian_target_ks():
    cov = np.array([[1.0, 0.6, 0.1], [0.6, 2.0, -0.3], [0.1, -0.3, 0.5]])
    prec = np.linalg.inv(cov)

    def log_target(x):
        return -0.5 * float(x @ prec @ x)

    res = adaptive_rwm(log_target, np.zeros(3), np.eye(3), 220_000, 20_000, rng_from_seed(3))
    sd = np.sqrt(np.diag(cov))
    # thin to roughly independent draws so the KS band applies
    for j in range(3):
        ks = stats.kstest(res.draws[::10, j] / sd[j], "norm").statistic
        assert ks < 0.02
    assert 0.15 < res.acceptance_rate < 0.35


def test_rwm_argument_checks():
    with pytest.raises(ValueError):
        adaptive_rwm(lambda x: 0.0, [0.0], [[1.0]], 10, 10, rng_from_seed(0))
    with pytest.raises(NoStartingPoint):
        adaptive_rwm(lambda x: -math.inf, [0.0], [[1.0]], 10, 0, rng_from_seed(0))
    s = gev_sample(GevParams(1, 0, 0.3), 50, seed=0)
    with pytest.raises(ValueError):
        sample_posterior(s, flat(), 10, 20, seed=0)


def test_no_start_for_constant_sample():
    with pytest.raises((NoStartingPoint, ValueError)):
        sample_posterior(Sample([1.0, 1.0, 1.0]), flat(), 100, 10, seed=0)


def test_proper_prior_runs():
    s = gev_sample(GevParams(1, 0, 0.3), 200, seed=4)
    c = sample_posterior(s, normal(), 6000, 2000, seed=0)
    assert np.all(np.isfinite(c.log_posts))


def test_scalar_likelihood_matches():
    rng = np.random.default_rng(0)
    s = gev_sample(GevParams(1, 0, 0.3), 100, seed=8)
    for xi in (0.3, 1e-8, -1e-8, 2e-7, -0.2, 0.0):
        tau, mu = rng.uniform(0.8, 1.2), rng.uniform(-0.1, 0.1)
        ref = log_likelihood(GevParams(tau, mu, xi), s)
        got = _log_lik_scalar(tau, mu, xi, s.values, s.n)
        assert got == pytest.approx(ref, rel=1e-10) if math.isfinite(ref) else got == -math.inf


def test_chain_length_check():
    with pytest.raises(ValueError):
        Chain(np.zeros((3, 3)), np.zeros(2), 0.2, 0)


def test_ess_iid_and_ar1():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((20_000, 2))
    ess = effective_sample_size(x)
    assert np.all(np.abs(ess / 20_000 - 1) < 0.1)
    phi = 0.9
    y = np.empty(200_000)
    y[0] = 0
    e = rng.standard_normal(y.size)
    for t in range(1, y.size):
        y[t] = phi * y[t - 1] + e[t]
    expected = y.size * (1 - phi) / (1 + phi)
    assert effective_sample_size(y)[0] == pytest.approx(expected, rel=0.15)
