import math

import numpy as np
import pytest
from scipy import integrate

from gevpost.estimation import fit
from gevpost.evidence import (
    FULL,
    REDUCED,
    EvidenceResult,
    ReducedIntegrand,
    log_Cn,
    log_Cn_full3d,
    log_integrate_peak,
    reduced_integrand_log,
    region_masses,
    region_radii,
)
from gevpost.gev_core import GevParams, Sample, gev_sample, to_beta
from gevpost.posterior_normal import log_Bn
from gevpost.priors import cauchy, flat, normal
from gevpost.specfun import EULER_GAMMA


def test_peak_integrator_gaussian():
    q = log_integrate_peak(lambda x: -0.5 * ((x - 3.0) / 0.01) ** 2, (-100, 100))
    assert q.converged
    assert q.log_value == pytest.approx(math.log(0.01 * math.sqrt(2 * math.pi)), abs=1e-10)
    assert q.mode == pytest.approx(3.0, abs=1e-8)


def test_peak_integrator_half_line():
    # int_0^inf x^4 e^{-x} dx = 24 with the mode inside and the edge at 0
    q = log_integrate_peak(lambda x: 4 * np.log(x) - x, (0, 50), domain=(0, np.inf))
    assert q.converged and q.log_value == pytest.approx(math.log(24), abs=1e-10)


def test_peak_integrator_mode_at_edge():
    q = log_integrate_peak(lambda x: -2.0 * x, (0, 10), domain=(0, np.inf))
    assert q.log_value == pytest.approx(math.log(0.5), abs=1e-10)


def test_peak_integrator_all_minus_inf():
    q = log_integrate_peak(lambda x: np.full_like(x, -np.inf), (0, 1))
    assert q.log_value == -math.inf


def test_reduced_integrand_domain():
    s = gev_sample(GevParams(1, 0, 0.4), 30, seed=1)
    assert np.isfinite(reduced_integrand_log(s.y_min - 1.0, 0.4, s, flat()))
    assert reduced_integrand_log(s.y_min + 0.1, 0.4, s, flat()) == -math.inf
    assert np.isfinite(reduced_integrand_log(s.y_max + 1.0, -0.3, s, flat()))
    assert reduced_integrand_log(s.y_max - 0.1, -0.3, s, flat()) == -math.inf
    assert reduced_integrand_log(s.y_max + 1.0, -0.6, s, flat()) == -math.inf
    with pytest.raises(ValueError):
        reduced_integrand_log(s.y_min - 1.0, 0.0, s, flat())
    with pytest.raises(ValueError):
        ReducedIntegrand(s, normal())


def test_reduced_integrand_matches_tau_quadrature():
    # integrate tau out numerically at fixed (beta, xi) and compare
    s = gev_sample(GevParams(1, 0, 0.4), 8, seed=2)
    beta, xi = s.y_min - 0.7, 0.35
    from gevpost.likelihood import log_likelihood

    def integrand(tau):
        p = GevParams(tau, beta + tau / xi, xi)
        return math.exp(log_likelihood(p, s) - math.log(tau) + 8.0)

    # d mu = d beta at fixed tau, so the (tau, beta) Jacobian is one
    val = integrate.quad(integrand, 0, np.inf, epsabs=0, epsrel=1e-12, limit=400)[0]
    assert reduced_integrand_log(beta, xi, s, flat()) == pytest.approx(math.log(val) - 8.0, abs=1e-9)


def test_n_below_three_rejected():
    with pytest.raises(ValueError):
        log_Cn(Sample([0.0, 1.0]), flat())
    with pytest.raises(ValueError):
        log_Cn(gev_sample(GevParams(1, 0, 0.1), 10, seed=0), flat(), tol=0.0)


def test_evidence_result_validation():
    with pytest.raises(ValueError):
        EvidenceResult(0.0, -1.0, REDUCED)


@pytest.mark.parametrize("xi0,seed", [(0.3, 1), (1.0, 4)])
def test_reduced_matches_full3d(xi0, seed):
    s = gev_sample(GevParams(1, 0, xi0), 20, seed=seed)
    a = log_Cn(s, flat(), 1e-8)
    b = log_Cn_full3d(s, flat(), 1e-6)
    assert a.method == REDUCED and b.method == FULL
    assert abs(a.log_Cn - b.log_Cn) / abs(a.log_Cn) < 1e-3
    assert abs(a.log_Cn - b.log_Cn) <= 3 * b.abs_err_log + 1e-6


def test_proper_prior_uses_full3d():
    s = gev_sample(GevParams(1, 0, 0.3), 20, seed=1)
    r = log_Cn(s, normal())
    assert r.method == FULL and np.isfinite(r.log_Cn)


def test_affine_equivariance():
    # tau -> 2 tau, mu -> 2 mu + 3 has Jacobian 4 and the prior 1 / tau halves,
    # while each density halves: log C_n moves by -(n - 1) log 2
    s = gev_sample(GevParams(1, 0, 0.3), 40, seed=5)
    for pr in (flat(), cauchy()):
        d = log_Cn(s.affine(3.0, 2.0), pr, 1e-8).log_Cn - log_Cn(s, pr, 1e-8).log_Cn
        assert d == pytest.approx(-(s.n - 1) * math.log(2), abs=1e-8)


def test_error_estimates_are_honest():
    rng = np.random.default_rng(7)
    for _ in range(20):
        th0 = GevParams(1, 0, rng.uniform(-0.3, 1.2))
        s = gev_sample(th0, int(rng.integers(20, 120)), seed=int(rng.integers(2**31)))
        a = log_Cn(s, flat(), 1e-4)
        b = log_Cn(s, flat(), 5e-5)
        assert a.converged and b.converged
        assert abs(a.log_Cn - b.log_Cn) <= max(a.abs_err_log, 1e-12)


def test_evidence_above_laplace_bound():
    s = gev_sample(GevParams(1, 0, 0.5), 200, seed=1)
    f = fit(s)
    assert log_Cn(s, flat(), 1e-6, fit=f).log_Cn >= log_Bn(f, flat()) - 1e-4


def test_region_radii_examples():
    rr = region_radii(GevParams(1, 0, 1.0))
    t1 = 4 - math.log(2) + EULER_GAMMA
    assert t1 == pytest.approx(3.884069, abs=1e-6)
    assert rr.r1 == pytest.approx(math.expm1(t1) * 1.01, rel=1e-12)
    assert math.expm1(t1) == pytest.approx(47.62, abs=0.01)
    assert rr.r2 == pytest.approx(1.01)
    assert rr.satisfied()
    assert rr.beta_cut == pytest.approx(to_beta(GevParams(1, 0, 1.0)).beta - 1.01)
    for xi in (0.05, 0.2, 0.5, 2.0, 8.0):
        assert region_radii(GevParams(2.0, 1.0, xi)).satisfied()
    with pytest.raises(ValueError):
        region_radii(GevParams(1, 0, 0.0))
    with pytest.raises(ValueError):
        region_radii(GevParams(1, 0, -0.2))


def test_region_masses_additivity():
    s = gev_sample(GevParams(1, 0, 0.5), 200, seed=0)
    f = fit(s)
    rr = region_radii(f.theta_hat)
    rm = region_masses(s, flat(), rr, f, 1e-6)
    err = sum(e for e in rm.abs_err_log if np.isfinite(e))
    assert abs(rm.additivity_gap()) <= 3 * err + 1e-9
    assert 0 <= rm.shell_fraction < 1
    assert np.all(rm.log_fractions() < 0)


def test_region_masses_refuse_negative_xi():
    s = gev_sample(GevParams(1, 0, -0.3), 200, seed=0)
    f = fit(s)
    rr = region_radii(GevParams(1, 0, 0.5))
    with pytest.raises(ValueError):
        region_masses(s, flat(), rr, f)
