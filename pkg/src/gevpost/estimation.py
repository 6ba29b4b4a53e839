"""Local maximum likelihood, observed information and the limiting Fisher information."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .gev_core import XI_MIN, GevParams, Sample, omega_contains
from .likelihood import (
    derivative_polys,
    evaluate_poly,
    log_likelihood,
    observation_terms,
    score_and_hessian,
)
from .specfun import EULER_GAMMA, gamma_deriv

XI_BOX = (XI_MIN + 1e-6, 10.0)
PWM_XI_CLAMP = (-0.49, 1.5)


class DegenerateSample(ValueError):
    pass


class NotPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class MleFit:
    theta_hat: GevParams
    log_lik_at_max: float
    obs_info: np.ndarray
    converged: bool
    iterations: int
    grad_norm: float
    hessian_negdef: bool = True
    method: str = "newton"
    sample: Sample | None = field(default=None, repr=False, compare=False)

    @property
    def n(self) -> int:
        return self.sample.n


@dataclass(frozen=True)
class ObservedInfo:
    matrix: np.ndarray
    inverse: np.ndarray
    logdet: float
    inverse_logdet: float
    c1_stat: float  # largest eigenvalue of the inverse
    min_inverse_eig: float


# -- starting values ---------------------------------------------------------


def pwm_init(s: Sample) -> GevParams:
    """Probability-weighted-moment start (Hosking 1985), moved inside Omega_n."""
    if s.n < 3:
        raise DegenerateSample("pwm_init needs at least 3 observations")
    y = s.values
    if y[-1] == y[0]:
        raise DegenerateSample("constant sample")
    n = s.n
    j = np.arange(1, n + 1, dtype=float)
    b0 = y.mean()
    b1 = np.sum((j - 1) / (n - 1) * y) / n
    b2 = np.sum((j - 1) * (j - 2) / ((n - 1) * (n - 2)) * y) / n
    c = (2 * b1 - b0) / (3 * b2 - b0) - math.log(2) / math.log(3)
    k = 7.8590 * c + 2.9554 * c * c  # k = -xi
    k = float(np.clip(k, -PWM_XI_CLAMP[1], -PWM_XI_CLAMP[0]))
    l2 = 2 * b1 - b0
    if abs(k) < 1e-6:
        tau = l2 / math.log(2)
        mu = b0 - EULER_GAMMA * tau
    else:
        g = math.gamma(1 + k)
        tau = l2 * k / (g * (1 - 2.0**-k))
        mu = b0 + tau * (g - 1) / k
    if not tau > 0:
        tau = float(np.std(y)) or 1.0
    p = GevParams(tau, mu, -k)
    # widen tau (which moves beta away from the data) until the sample is in support
    for _ in range(200):
        if omega_contains(p, s):
            return p
        p = GevParams(p.tau * 1.25, p.mu, p.xi)
    raise DegenerateSample("could not place the start inside the support")


def quantile_init(s: Sample, probs=(0.1, 0.5, 0.9)) -> GevParams:
    """Three-quantile match; unlike PWM it needs no finite mean, so it suits xi > 1."""
    if s.n < 3 or s.y_max == s.y_min:
        raise DegenerateSample("quantile_init needs at least 3 distinct observations")
    q1, q2, q3 = np.quantile(s.values, probs)
    if not q1 < q2 < q3:
        raise DegenerateSample("sample quantiles are tied")
    e = -np.log(np.asarray(probs))  # Exp(1) levels, decreasing
    target = (q3 - q2) / (q2 - q1)

    def ratio(xi):
        g = np.expm1(-xi * np.log(e)) / xi if xi != 0 else -np.log(e)
        return (g[2] - g[1]) / (g[1] - g[0]) - target

    lo, hi = XI_BOX[0] + 1e-3, XI_BOX[1] - 1e-3
    if ratio(lo) * ratio(hi) > 0:
        xi = lo if abs(ratio(lo)) < abs(ratio(hi)) else hi
    else:
        xi = optimize.brentq(ratio, lo, hi, xtol=1e-10)
    g = np.expm1(-xi * np.log(e)) / xi if xi != 0 else -np.log(e)
    tau = (q3 - q1) / (g[2] - g[0])
    p = GevParams(tau, q2 - tau * g[1], xi)
    for _ in range(200):
        if omega_contains(p, s):
            return p
        p = GevParams(p.tau * 1.25, p.mu, p.xi)
    raise DegenerateSample("could not place the start inside the support")


# -- Newton solver -----------------------------------------------------------


def _feasible(x) -> bool:
    return x[0] > 0 and XI_BOX[0] < x[2] < XI_BOX[1]


def _loglik(x, s) -> float:
    if not _feasible(x):
        return -math.inf
    return log_likelihood(GevParams.from_array(x), s)


def _ascent_direction(g, h):
    """Newton direction, with eigenvalues flipped when h is not negative definite."""
    lam, v = np.linalg.eigh(h)
    negdef = bool(np.all(lam < 0))
    scale = max(np.max(np.abs(lam)), 1e-300)
    lam_mod = -np.maximum(np.abs(lam), 1e-8 * scale)
    return v @ ((v.T @ g) / -lam_mod), negdef


def local_mle(s: Sample, init: GevParams | None = None, tol: float | None = None,
              max_iter: int = 200) -> MleFit:
    """Damped Newton ascent with Armijo backtracking that never leaves Omega_n."""
    if init is None:
        init = pwm_init(s)
    if tol is None:
        tol = 1e-8 * s.n
    if not tol > 0:
        raise ValueError("tol must be positive")
    if not omega_contains(init, s):
        raise ValueError("init lies outside the support of the sample")

    x = init.as_array()
    f = _loglik(x, s)
    method = "newton"
    it = 0
    stalls = 0
    while it < max_iter:
        g, h = score_and_hessian(GevParams.from_array(x), s)
        if np.linalg.norm(g) < tol:
            break
        it += 1
        d, _ = _ascent_direction(g, h)
        slope = float(g @ d)
        if slope <= 0:
            d, slope = g, float(g @ g)
        step = 1.0
        accepted = False
        for _ in range(60):
            xn = x + step * d
            fn = _loglik(xn, s)
            if np.isfinite(fn) and fn >= f + 1e-4 * step * slope:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no ascent possible along d at working precision
            xn, fn = x + step * d, _loglik(x + step * d, s)
            if not (np.isfinite(fn) and fn >= f):
                stalls += 1
                if stalls > 2:
                    break
                continue
        x, f = xn, fn

    g, h = score_and_hessian(GevParams.from_array(x), s)
    if np.linalg.norm(g) < tol:
        x, f, g, h = _polish(x, f, g, h, s)
    else:
        x, f, extra = _nelder_mead_polish(x, s, tol)
        it += extra
        method = "nelder-mead+newton"
        g, h = score_and_hessian(GevParams.from_array(x), s)

    lam = np.linalg.eigvalsh(h)
    negdef = bool(np.all(lam < 0))
    gn = float(np.linalg.norm(g))
    return MleFit(
        theta_hat=GevParams.from_array(x),
        log_lik_at_max=float(f),
        obs_info=-h,
        converged=bool(gn < tol and negdef),
        iterations=it,
        grad_norm=gn,
        hessian_negdef=negdef,
        method=method,
        sample=s,
    )


def _polish(x, f, g, h, s: Sample, steps: int = 2):
    """Extra full Newton steps past the tolerance, kept while the gradient shrinks.

    Quadratic convergence makes these nearly free and brings the score
    identity sum w^(-1/xi) = n close to rounding level.
    """
    for _ in range(steps):
        try:
            d = -np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            break
        xn = x + d
        fn = _loglik(xn, s)
        if not np.isfinite(fn):
            break
        gn, hn = score_and_hessian(GevParams.from_array(xn), s)
        if not np.linalg.norm(gn) < np.linalg.norm(g):
            break
        x, f, g, h = xn, fn, gn, hn
    return x, f, g, h


def _nelder_mead_polish(x0, s: Sample, tol: float):
    """Fallback when Newton stalls: Nelder-Mead, then a few Newton steps."""
    def neg(x):
        v = _loglik(x, s)
        return -v if np.isfinite(v) else np.inf

    res = optimize.minimize(neg, x0, method="Nelder-Mead",
                            options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    x = res.x if np.isfinite(res.fun) and res.fun <= neg(x0) else x0
    f = _loglik(x, s)
    extra = 0
    for _ in range(30):
        g, h = score_and_hessian(GevParams.from_array(x), s)
        if np.linalg.norm(g) < tol:
            break
        d, _ = _ascent_direction(g, h)
        step = 1.0
        while step > 1e-12:
            fn = _loglik(x + step * d, s)
            if np.isfinite(fn) and fn >= f:
                x, f = x + step * d, fn
                break
            step *= 0.5
        else:
            break
        extra += 1
    return x, f, extra + int(res.nit)


def fit(s: Sample, tol: float | None = None) -> MleFit:
    """local_mle from the PWM start, retried from a quantile start if that fails."""
    first = local_mle(s, pwm_init(s), tol)
    if first.converged:
        return first
    try:
        second = local_mle(s, quantile_init(s), tol)
    except DegenerateSample:
        return first
    if second.converged and (not first.converged or second.log_lik_at_max > first.log_lik_at_max):
        return second
    return first


# -- information matrices ----------------------------------------------------


def observed_info(fit: MleFit) -> ObservedInfo:
    m = np.asarray(fit.obs_info, dtype=float)
    m = 0.5 * (m + m.T)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("observed information is not positive definite") from exc
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    inv_chol = np.linalg.solve(chol, np.eye(3))
    inv = inv_chol.T @ inv_chol
    lam = np.linalg.eigvalsh(inv)
    return ObservedInfo(m, inv, logdet, -logdet, float(lam[-1]), float(lam[0]))


def sum_stat_limit(xi0: float, k: int, a: int, b: int) -> float:
    """Almost-sure limit of S(k, a, b) / n: (-xi0)^b Gamma^(b)(k xi0 + a + 1)."""
    arg = k * xi0 + a + 1
    if not arg > 0:
        raise ValueError("k xi0 + a + 1 must be positive")
    return (-xi0) ** b * gamma_deriv(arg, b)


_LIMIT_BAND = 0.05


def expected_info_limit(theta0: GevParams) -> np.ndarray:
    """Per-observation Fisher information I(theta0) = -lim n^-1 L_n''."""
    if not theta0.xi > XI_MIN:
        raise ValueError("xi0 must exceed -1/2")
    tau, xi = theta0.tau, theta0.xi
    if abs(xi) >= _LIMIT_BAND:
        lim = np.zeros((3, 2, 3))
        for k in range(3):
            for a in range(2):
                for b in range(3):
                    lim[k, a, b] = sum_stat_limit(xi, k, a, b)
        _, hess_p = derivative_polys(tau, xi)
        out = np.empty((3, 3))
        for i in range(3):
            for j in range(i, 3):
                out[i, j] = out[j, i] = -evaluate_poly(hess_p[i][j], lim)
        return out
    # near xi0 = 0 the table coefficients cancel; integrate over E ~ Exp(1)
    # with Y = mu + tau (E^-xi - 1) / xi instead
    def y_of(e):
        return theta0.mu + tau * (np.expm1(-xi * np.log(e)) / xi if xi else -np.log(e))

    out = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            def f(e, i=i, j=j):
                return -observation_terms(tau, theta0.mu, xi, y_of(e))[1][i, j, 0] * math.exp(-e)
            val = 0.0
            for lo, hi in ((0.0, 1.0), (1.0, 10.0), (10.0, np.inf)):
                val += integrate.quad(f, lo, hi, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
            out[i, j] = out[j, i] = val
    return out
