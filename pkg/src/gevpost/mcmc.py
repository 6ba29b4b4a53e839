"""Adaptive random-walk Metropolis for the exact GEV posterior.

The chain runs on x = (log tau, mu, xi); the target picks up the Jacobian
log tau.  During burn-in the proposal covariance follows a running estimate
of the chain covariance scaled by 2.38^2 / 3, with a Robbins-Monro factor
steering the acceptance rate toward 0.234.  After burn-in the proposal is
frozen, so the retained draws come from a time-homogeneous Markov chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .estimation import DegenerateSample, MleFit, fit as mle_fit, pwm_init
from .gev_core import XI_MIN, GevParams, Sample, omega_contains, rng_from_seed
from .posterior_normal import LaplaceFit
from .priors import PriorSpec

TARGET_ACCEPT = 0.234
_BLOCK = 4096


class NoStartingPoint(ValueError):
    pass


@dataclass(frozen=True)
class Chain:
    draws: np.ndarray          # (m, 3) rows (tau, mu, xi), post burn-in
    log_posts: np.ndarray      # unnormalized log posterior at each draw
    acceptance_rate: float     # over the retained iterations
    seed: int

    def __post_init__(self):
        if len(self.draws) != len(self.log_posts):
            raise ValueError("draws and log_posts differ in length")

    def __len__(self):
        return len(self.draws)

    def params(self) -> list[GevParams]:
        return [GevParams.from_array(r) for r in self.draws]


@dataclass(frozen=True)
class RwmResult:
    draws: np.ndarray
    log_targets: np.ndarray
    acceptance_rate: float
    proposal_cov: np.ndarray


def adaptive_rwm(log_target: Callable[[np.ndarray], float], x0, cov0, n_iter: int,
                 burn_in: int, rng: np.random.Generator) -> RwmResult:
    """Generic adaptive RWM; returns the n_iter - burn_in post-burn-in states."""
    if not (n_iter > burn_in >= 0):
        raise ValueError("need n_iter > burn_in >= 0")
    x = np.array(x0, dtype=float)
    dim = x.size
    f = float(log_target(x))
    if not np.isfinite(f):
        raise NoStartingPoint("log target is not finite at the starting point")
    cov = np.array(cov0, dtype=float).reshape(dim, dim)
    base = 2.38**2 / dim
    log_scale = 0.0
    mean = x.copy()
    emp = cov / base
    chol = np.linalg.cholesky(cov)

    keep = n_iter - burn_in
    draws = np.empty((keep, dim))
    fs = np.empty(keep)
    accepted = 0
    z_blk = u_blk = None
    for it in range(n_iter):
        j = it % _BLOCK
        if j == 0:
            z_blk = rng.standard_normal((_BLOCK, dim))
            u_blk = np.log(rng.random(_BLOCK))
        prop = x + math.exp(log_scale) * (chol @ z_blk[j])
        fp = float(log_target(prop))
        ok = np.isfinite(fp) and u_blk[j] < fp - f
        if ok:
            x, f = prop, fp
        if it < burn_in:
            # covariance recursion and Robbins-Monro scale, burn-in only
            k = it + 2
            gamma = 1.0 / k
            dx = x - mean
            mean = mean + gamma * dx
            emp = emp + gamma * (np.outer(dx, dx) * (1.0 - gamma) - emp)
            a = 1.0 if ok else 0.0
            log_scale += (a - TARGET_ACCEPT) * min(1.0, 10.0 / math.sqrt(k))
            if it % 50 == 49 and it > 200:
                try:
                    chol = np.linalg.cholesky(base * emp + 1e-12 * np.eye(dim))
                    log_scale = 0.0 if abs(log_scale) > 5 else log_scale
                except np.linalg.LinAlgError:
                    pass
        else:
            i = it - burn_in
            draws[i] = x
            fs[i] = f
            accepted += ok
    prop_cov = math.exp(2 * log_scale) * chol @ chol.T
    return RwmResult(draws, fs, accepted / keep, prop_cov)


def _log_lik_scalar(tau, mu, xi, y, n) -> float:
    """Sampler fast path of log_likelihood_batch for one parameter vector."""
    z = (y - mu) / tau
    x = xi * z
    if x.min() <= -1.0:
        return -math.inf
    if abs(xi) < 1e-6:
        # q = log1p(x) / xi = z (1 - x / 2 + x^2 / 3) to O(x^3)
        q = z * (1.0 + x * (-0.5 + x / 3.0))
        a_sum = xi * q.sum()
    else:
        a = np.log1p(x)
        a_sum = a.sum()
        q = a / xi
    with np.errstate(over="ignore"):
        v = -n * math.log(tau) - a_sum - q.sum() - np.exp(-q).sum()
    return float(v) if math.isfinite(v) else -math.inf


def _start(s: Sample, fit: MleFit | None):
    if fit is None:
        try:
            fit = mle_fit(s)
        except (ValueError, np.linalg.LinAlgError):
            fit = None
    if fit is not None and fit.converged and omega_contains(fit.theta_hat, s):
        th = fit.theta_hat
        cov = np.linalg.inv(fit.obs_info)
        # delta method for log tau
        jac = np.diag([1.0 / th.tau, 1.0, 1.0])
        cov = jac @ cov @ jac.T
        cov = 0.5 * (cov + cov.T)
        if np.all(np.linalg.eigvalsh(cov) > 0):
            return th, cov
    try:
        th = pwm_init(s)
    except DegenerateSample as exc:
        raise NoStartingPoint(str(exc)) from exc
    sd = max(s.y_max - s.y_min, 1e-8) / math.sqrt(s.n)
    return th, np.diag([0.1 / s.n, sd * sd, 0.1 / s.n])


def sample_posterior(s: Sample, pr: PriorSpec, n_iter: int, burn_in: int, seed: int,
                     fit: MleFit | None = None) -> Chain:
    """Draws from pi_n(theta) proportional to L_n(theta) pi(theta)."""
    if not (n_iter > burn_in >= 0):
        raise ValueError("need n_iter > burn_in >= 0")
    th0, cov0 = _start(s, fit)
    if not (omega_contains(th0, s) and th0.xi > XI_MIN):
        raise NoStartingPoint("no starting point inside the support")

    y = s.values
    n = s.n
    log_g = pr.log_g if pr.scale_invariant else None

    def log_target(x):
        log_tau, mu, xi = x
        if not xi > XI_MIN:
            return -math.inf
        tau = math.exp(log_tau)
        if log_g is not None:
            lp = float(log_g(xi)) - log_tau
        else:
            lp = float(pr.proper_log_density(tau, mu, xi))
        return _log_lik_scalar(tau, mu, xi, y, n) + lp + log_tau

    x0 = np.array([math.log(th0.tau), th0.mu, th0.xi])
    res = adaptive_rwm(log_target, x0, cov0, n_iter, burn_in, rng_from_seed(seed))
    draws = res.draws.copy()
    draws[:, 0] = np.exp(draws[:, 0])
    return Chain(draws, res.log_targets - res.draws[:, 0], res.acceptance_rate, int(seed))


def standardize_draws(c: Chain, lf: LaplaceFit) -> np.ndarray:
    """z = R^T (theta - theta_hat), precision = R R^T."""
    return lf.standardize(np.asarray(c.draws, dtype=float))


def effective_sample_size(x) -> np.ndarray:
    """Per-column ESS by Geyer's initial monotone sequence estimator."""
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    m = x.shape[0]
    out = np.empty(x.shape[1])
    nfft = 1 << (2 * m - 1).bit_length()
    for j in range(x.shape[1]):
        y = x[:, j] - x[:, j].mean()
        f = np.fft.rfft(y, nfft)
        acov = np.fft.irfft(f * np.conj(f), nfft)[:m] / m
        if acov[0] <= 0:
            out[j] = float(m)
            continue
        rho = acov / acov[0]
        pairs = rho[: 2 * ((m - 1) // 2)].reshape(-1, 2).sum(axis=1)
        pos = np.nonzero(pairs <= 0)[0]
        pairs = pairs[: pos[0]] if pos.size else pairs
        pairs = np.minimum.accumulate(pairs)
        tau = -1.0 + 2.0 * pairs.sum()
        out[j] = m / max(tau, 1.0 / m)
    return out
