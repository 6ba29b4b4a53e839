import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _cases import fd_hessian, fd_score, random_case
from gevpost.estimation import fit, sum_stat_limit
from gevpost.gev_core import GevParams, Sample, gev_log_pdf, gev_sample
from gevpost.likelihood import (
    OutOfSupport,
    SumStatIndex,
    hessian,
    hessian_from_sums,
    log_likelihood,
    log_likelihood_batch,
    score,
    score_and_hessian,
    sum_stat,
)


def test_single_gumbel_point():
    s = Sample([0.0])
    p = GevParams(1, 0, 0)
    assert log_likelihood(p, s) == pytest.approx(-1.0, abs=1e-15)
    # mu-score (1/tau)(1 - e^{-z}) vanishes at z = 0
    assert score(p, s)[1] == pytest.approx(0.0, abs=1e-15)


def test_outside_support():
    s = Sample([0.0, 1.0])
    p = GevParams(1, 2, 1)  # beta = 1 > y_min
    assert log_likelihood(p, s) == -math.inf
    with pytest.raises(OutOfSupport):
        score(p, s)
    with pytest.raises(OutOfSupport):
        sum_stat(p, s, (0, 1, 0))


def test_matches_density_sum():
    rng = np.random.default_rng(1)
    for _ in range(50):
        p, s = random_case(rng)
        ref = math.fsum(gev_log_pdf(p, s.values))
        assert log_likelihood(p, s) == pytest.approx(ref, rel=1e-10)


def test_score_against_finite_differences():
    rng = np.random.default_rng(2)
    for _ in range(100):
        p, s = random_case(rng)
        g, g_fd = score(p, s), fd_score(p, s)
        assert np.max(np.abs(g - g_fd)) / np.max(np.abs(g)) < 1e-5


def test_hessian_against_finite_differences():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p, s = random_case(rng)
        h, h_fd = hessian(p, s), fd_hessian(p, s)
        assert np.max(np.abs(h - h_fd)) / np.max(np.abs(h)) < 1e-4
        assert np.array_equal(h, h.T)


@pytest.mark.parametrize("xi", [-0.3, 0.2, 1.0])
def test_table_hessian_agrees(xi):
    s = gev_sample(GevParams(1, 0, xi), 300, seed=4)
    p = fit(s).theta_hat
    assert np.allclose(hessian_from_sums(p, s), hessian(p, s), rtol=1e-8, atol=1e-8 * s.n)


@pytest.mark.parametrize("xi", [1e-7, -1e-7, 1e-3])
def test_derivatives_smooth_through_zero(xi):
    s = gev_sample(GevParams(1, 0, 0), 200, seed=5)
    g0, h0 = score_and_hessian(GevParams(1, 0, 0), s)
    g1, h1 = score_and_hessian(GevParams(1, 0, xi), s)
    assert np.allclose(g1, g0, atol=50 * s.n * abs(xi))
    assert np.allclose(h1, h0, atol=500 * s.n * abs(xi))


def test_mle_stationary_and_negative_definite():
    for seed in range(5):
        s = gev_sample(GevParams(1, 0, 0.2), 1000, seed=seed)
        f = fit(s)
        assert f.converged
        assert np.max(np.abs(score(f.theta_hat, s))) < 1e-8 * s.n
        assert np.all(np.linalg.eigvalsh(hessian(f.theta_hat, s)) < 0)


def test_score_identity_at_mle():
    s = gev_sample(GevParams(1, 0, 0.3), 2000, seed=6)
    f = fit(s)
    assert sum_stat(f.theta_hat, s, (0, 1, 0)) == pytest.approx(s.n, rel=1e-6)


def test_sum_stat_index_validation():
    with pytest.raises(ValueError):
        SumStatIndex(3, 0, 0).check()
    with pytest.raises(ValueError):
        sum_stat(GevParams(1, 0, 0.1), Sample([0.0]), (0, 2, 0))


def test_sum_stat_limit_gamma_one():
    # S(1, 0, 0) / n -> Gamma(xi0 + 1) = 1 at xi0 = 1
    assert sum_stat_limit(1.0, 1, 0, 0) == pytest.approx(1.0, abs=1e-13)
    vals = [sum_stat(GevParams(1, 0, 1), gev_sample(GevParams(1, 0, 1), 100_000, seed=k),
                     (1, 0, 0)) / 100_000 for k in range(5)]
    assert np.mean(vals) == pytest.approx(1.0, abs=0.01)


def test_sum_stat_limit_log_moment():
    th0 = GevParams(1, 0, 0.5)
    ref = -0.5 * (1 - 0.5772156649015329)
    assert sum_stat_limit(0.5, 0, 1, 1) == pytest.approx(ref, abs=1e-12)
    assert ref == pytest.approx(-0.21139, abs=1e-5)
    s = gev_sample(th0, 100_000, seed=8)
    assert sum_stat(th0, s, (0, 1, 1)) / s.n == pytest.approx(ref, rel=0.02)


def test_batch_matches_scalar():
    rng = np.random.default_rng(9)
    p, s = random_case(rng)
    thetas = [p.as_array(), [p.tau, p.mu, 0.0], [p.tau, p.mu, 1e-7], [p.tau, s.y_min + 50, 1.0],
              [-1.0, 0.0, 0.1]]
    got = log_likelihood_batch(thetas, s)
    for th, v in zip(thetas, got):
        if th[0] <= 0:
            assert v == -math.inf
            continue
        ref = log_likelihood(GevParams.from_array(th), s)
        assert v == pytest.approx(ref, rel=1e-11) if math.isfinite(ref) else v == -math.inf


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.floats(-50, 50), st.floats(0.1, 20))
def test_affine_invariance(seed, shift, scale):
    rng = np.random.default_rng(seed)
    p, s = random_case(rng)
    moved = GevParams(p.tau, p.mu + shift, p.xi)
    assert log_likelihood(moved, s.affine(shift, 1.0)) == pytest.approx(log_likelihood(p, s), rel=1e-9, abs=1e-9)
    scaled = GevParams(p.tau * scale, shift + scale * p.mu, p.xi)
    lhs = log_likelihood(scaled, s.affine(shift, scale))
    assert lhs == pytest.approx(log_likelihood(p, s) - s.n * math.log(scale), rel=1e-9, abs=1e-8)
