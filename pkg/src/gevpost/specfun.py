"""Special functions and the inequality checks used for the tail-region bounds.

Everything here works on floats or numpy arrays.  Gamma-type functions are
evaluated through an upward recurrence into the range x >= 10 followed by the
Stirling / asymptotic series, which keeps full double precision for very
large arguments (the incomplete gamma is needed with a equal to the sample
size).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

EULER_GAMMA = 0.57721566490153286061

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)
_SHIFT_TO = 10.0


def _as_positive(x, name="x"):
    arr = np.asarray(x, dtype=float)
    if np.any(~(arr > 0)):
        raise ValueError(f"{name} must be positive")
    return arr


def _shift_up(x):
    """Return (x + k, sum of log(x + j) for j < k) with x + k >= 10."""
    x = np.array(x, dtype=float, copy=True)
    acc = np.zeros_like(x)
    for _ in range(int(_SHIFT_TO) + 1):
        small = x < _SHIFT_TO
        if not small.any():
            break
        acc = np.where(small, acc + np.log(np.where(small, x, 1.0)), acc)
        x = np.where(small, x + 1.0, x)
    return x, acc


def _stirling_tail(y):
    # log Gamma(y) - [(y - 1/2) log y - y + log sqrt(2 pi)], valid for y >= 10
    inv = 1.0 / y
    inv2 = inv * inv
    return inv * (1.0 / 12 - inv2 * (1.0 / 360 - inv2 * (1.0 / 1260 - inv2 * (1.0 / 1680 - inv2 / 1188))))


def log_gamma(x):
    """log Gamma(x) for x > 0."""
    arr = _as_positive(x)
    y, acc = _shift_up(arr)
    out = (y - 0.5) * np.log(y) - y + _LOG_SQRT_2PI + _stirling_tail(y) - acc
    # exact zeros, lost to cancellation after the upward shift
    out = np.where((arr == 1.0) | (arr == 2.0), 0.0, out)
    return out if out.ndim else float(out)


def _digamma_trigamma(x):
    x = np.array(x, dtype=float, copy=True)
    psi_acc = np.zeros_like(x)
    tri_acc = np.zeros_like(x)
    for _ in range(int(_SHIFT_TO) + 1):
        small = x < _SHIFT_TO
        if not small.any():
            break
        xs = np.where(small, x, 1.0)
        psi_acc = np.where(small, psi_acc - 1.0 / xs, psi_acc)
        tri_acc = np.where(small, tri_acc + 1.0 / (xs * xs), tri_acc)
        x = np.where(small, x + 1.0, x)
    inv = 1.0 / x
    inv2 = inv * inv
    psi = np.log(x) - 0.5 * inv - inv2 * (
        1.0 / 12 - inv2 * (1.0 / 120 - inv2 * (1.0 / 252 - inv2 * (1.0 / 240 - inv2 / 132)))
    )
    tri = inv + 0.5 * inv2 + inv * inv2 * (
        1.0 / 6 - inv2 * (1.0 / 30 - inv2 * (1.0 / 42 - inv2 * (1.0 / 30 - inv2 * 5.0 / 66)))
    )
    return psi + psi_acc, tri + tri_acc


def gamma_derivatives(x):
    """Return (digamma(x), trigamma(x)) for x > 0."""
    arr = _as_positive(x)
    psi, tri = _digamma_trigamma(arr)
    if psi.ndim == 0:
        return float(psi), float(tri)
    return psi, tri


def gamma_deriv(x, order: int):
    """Gamma^{(order)}(x) for order in {0, 1, 2}.

    Uses Gamma' = Gamma psi and Gamma'' = Gamma (psi^2 + psi').
    """
    arr = _as_positive(x)
    g = np.exp(log_gamma(arr))
    if order == 0:
        out = g
    else:
        psi, tri = _digamma_trigamma(arr)
        if order == 1:
            out = g * psi
        elif order == 2:
            out = g * (psi * psi + tri)
        else:
            raise ValueError("order must be 0, 1 or 2")
    return out if np.ndim(out) else float(out)


def log_beta(a, b):
    """log B(a, b) = log Gamma(a) + log Gamma(b) - log Gamma(a + b)."""
    a = _as_positive(a, "a")
    b = _as_positive(b, "b")
    out = log_gamma(a) + log_gamma(b) - log_gamma(a + b)
    return out if np.ndim(out) else float(out)


# -- regularized incomplete gamma -------------------------------------------

_TINY = 1e-300
_EPS = 1e-16


def _log1pmx(x):
    # log(1 + x) - x without cancellation for small |x|
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):  # x = -1 maps to -inf, as it should
        out = np.log1p(x) - x
    small = np.abs(x) < 0.25
    if small.any():
        xs = x[small]
        term = xs * xs
        acc = np.zeros_like(xs)
        for k in range(2, 60):
            acc += (-1) ** (k + 1) * term / k
            term = term * xs
        out[small] = acc
    return out


def _log_prefactor(a, z):
    """log(z^a e^-z / Gamma(a + 1)), accurate when a is large and z near a."""
    big = a >= _SHIFT_TO
    out = np.empty_like(z)
    if big.any():
        ab, zb = a[big], z[big]
        out[big] = ab * _log1pmx((zb - ab) / ab) - 0.5 * np.log(ab) - _LOG_SQRT_2PI - _stirling_tail(ab)
    if (~big).any():
        ab, zb = a[~big], z[~big]
        out[~big] = ab * np.log(zb) - zb - log_gamma(ab + 1.0)
    return out


def _log_series_lower(a, z, max_iter):
    # log P(a, z) for z < a + 1
    term = np.ones_like(z)
    total = np.ones_like(z)
    ap = a.copy()
    for _ in range(max_iter):
        ap = ap + 1.0
        term = term * z / ap
        total = total + term
        if np.all(np.abs(term) <= np.abs(total) * _EPS):
            break
    else:
        raise RuntimeError("incomplete gamma series failed to converge")
    return _log_prefactor(a, z) + np.log(total)


def _log_cf_upper(a, z, max_iter):
    # log Q(a, z) for z >= a + 1, modified Lentz
    b = z + 1.0 - a
    c = np.full_like(z, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    done = np.zeros(z.shape, dtype=bool)
    for i in range(1, max_iter):
        an = -i * (i - a)
        b = b + 2.0
        d = an * d + b
        d = np.where(np.abs(d) < _TINY, _TINY, d)
        c = b + an / c
        c = np.where(np.abs(c) < _TINY, _TINY, c)
        d = 1.0 / d
        delta = d * c
        h = np.where(done, h, h * delta)
        done |= np.abs(delta - 1.0) < _EPS
        if done.all():
            break
    else:
        raise RuntimeError("incomplete gamma continued fraction failed to converge")
    return _log_prefactor(a, z) + np.log(a) + np.log(h)


def _log1mexp(x):
    # log(1 - exp(x)) for x <= 0
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(x > -math.log(2.0), np.log(-np.expm1(x)), np.log1p(-np.exp(x)))


def log_reg_inc_gamma(a, z, max_iter: int = 200_000):
    """Return (log P(a, z), log Q(a, z)) with P + Q = 1.

    P is the regularized lower incomplete gamma gamma(a, z) / Gamma(a) and Q
    its complement.  Both are computed in log space so values far below the
    double-precision range remain usable.
    """
    a_arr, z_arr = np.broadcast_arrays(_as_positive(a, "a"), np.asarray(z, dtype=float))
    a_arr = np.array(a_arr, dtype=float)
    z_arr = np.array(z_arr, dtype=float)
    if np.any(z_arr < 0) or np.any(np.isnan(z_arr)):
        raise ValueError("z must be nonnegative")
    log_p = np.empty_like(z_arr)
    log_q = np.empty_like(z_arr)

    zero = z_arr == 0
    inf = np.isinf(z_arr)
    log_p[zero], log_q[zero] = -np.inf, 0.0
    log_p[inf], log_q[inf] = 0.0, -np.inf

    lower = ~zero & ~inf & (z_arr < a_arr + 1.0)
    upper = ~zero & ~inf & ~lower
    if lower.any():
        lp = _log_series_lower(a_arr[lower], z_arr[lower], max_iter)
        log_p[lower] = lp
        log_q[lower] = _log1mexp(np.minimum(lp, 0.0))
    if upper.any():
        lq = _log_cf_upper(a_arr[upper], z_arr[upper], max_iter)
        log_q[upper] = lq
        log_p[upper] = _log1mexp(np.minimum(lq, 0.0))
    if log_p.ndim == 0:
        return float(log_p), float(log_q)
    return log_p, log_q


def reg_inc_gamma_lower(a, z):
    """Regularized lower incomplete gamma P(a, z)."""
    lp, _ = log_reg_inc_gamma(a, z)
    return np.exp(lp)


def reg_inc_gamma_upper(a, z):
    """Regularized upper incomplete gamma Q(a, z) = 1 - P(a, z)."""
    _, lq = log_reg_inc_gamma(a, z)
    return np.exp(lq)


def log_inc_gamma_lower(a, z):
    """log of the unregularized lower incomplete gamma gamma(a, z)."""
    lp, _ = log_reg_inc_gamma(a, z)
    return lp + log_gamma(a)


# -- inequality checks ----------------------------------------------------


@dataclass(frozen=True)
class BoundCheck:
    lhs: float
    rhs: float
    holds: bool
    converged: bool = True


def carlson_bound_check(deltas, xi: float, quad_tol: float = 1e-10) -> BoundCheck:
    """Check int_0^inf s^(n-1) prod (1 + d_j s)^(-1-xi) ds < B(n, n xi) / prod d_j.

    Both sides are returned as natural logs.  The integral is taken in
    t = log s, where the integrand is smooth and decays like e^(n t) on the
    left and e^(-n xi t) on the right; it is truncated where it has fallen by
    e^-60 from its peak and scaled by the peak value.
    """
    d = np.asarray(deltas, dtype=float)
    if d.ndim != 1 or d.size < 2 or np.any(d <= 0):
        raise ValueError("deltas must be a positive vector of length >= 2")
    if not d.min() < d.max():
        raise ValueError("deltas must not all be equal")
    if not xi > 0:
        raise ValueError("xi must be positive")
    n = d.size

    def log_f(t):
        t = np.asarray(t, dtype=float)
        return n * t - (1.0 + xi) * np.sum(np.logaddexp(0.0, np.add.outer(t, np.log(d))), axis=-1)

    res = optimize.minimize_scalar(lambda t: -float(log_f(t)),
                                   bracket=(-math.log(d.max()) - 1.0, -math.log(d.min()) + 1.0))
    peak = float(res.x)
    ref = float(log_f(peak))
    lo = peak - (60.0 + math.log(n)) / n - 1.0
    hi = peak + (60.0 + math.log(n)) / (n * xi) + 1.0
    while log_f(lo) - ref > -60.0:
        lo -= 1.0
    while log_f(hi) - ref > -60.0:
        hi += (hi - peak)
    f = lambda t: math.exp(float(log_f(t)) - ref)
    res_a, err_a = integrate.quad(f, lo, peak, epsabs=0.0, epsrel=quad_tol, limit=500)
    res_b, err_b = integrate.quad(f, peak, hi, epsabs=0.0, epsrel=quad_tol, limit=500)
    total = res_a + res_b
    converged = (err_a + err_b) <= 100 * quad_tol * total
    lhs = ref + math.log(total)
    rhs = log_beta(n, n * xi) - float(np.sum(np.log(d)))
    return BoundCheck(lhs, rhs, lhs < rhs, bool(converged))


def incomplete_gamma_bound_check(n: int, xi: float) -> BoundCheck:
    """gamma(a, z) < 7 / sqrt(a) * exp(-z + a log z) with a = n, z = (n-1) log(n xi) / (n xi)."""
    a = float(n)
    z = (n - 1) * math.log(n * xi) / (n * xi)
    if not z > 0:
        raise ValueError("need n * xi > 1")
    lhs = float(log_inc_gamma_lower(a, z))
    rhs = math.log(7.0) - 0.5 * math.log(a) - z + a * math.log(z)
    return BoundCheck(lhs, rhs, lhs < rhs)


def beta_bound_check(n: int, b_seq_value: float, xi: float) -> BoundCheck:
    """B(n-1, (n-1)/(xi log(n-1))) < 30 sqrt(b) exp((n-1)/b - (n-1)/xi), in logs."""
    b = float(b_seq_value)
    if n < 3 or b <= 0:
        raise ValueError("need n >= 3 and b > 0")
    if not xi > b:
        raise ValueError("need xi > b")
    if not (n - 1) / (2.0 * b * math.log(n - 1)) > 1.47:
        raise ValueError("precondition (n-1)/(2 b log(n-1)) > 1.47 violated")
    m = n - 1.0
    lhs = float(log_beta(m, m / (xi * math.log(m))))
    rhs = math.log(30.0) + 0.5 * math.log(b) + m / b - m / xi
    return BoundCheck(lhs, rhs, lhs < rhs)


def gp_moment(kappa: float, tau: float, k: int) -> float:
    """E X^k for a generalized Pareto variable with shape kappa and scale tau."""
    if k < 1 or int(k) != k:
        raise ValueError("k must be a positive integer")
    if not tau > 0:
        raise ValueError("tau must be positive")
    if k * kappa >= 1:
        raise ValueError("moment exists only when k * kappa < 1")
    denom = 1.0
    for i in range(k + 1):
        denom *= 1.0 - i * kappa
    return math.factorial(k) * tau**k / denom


def gp_sample(kappa: float, tau: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from GP(kappa, tau); used as a Monte Carlo oracle."""
    u = rng.random(size)
    if kappa == 0:
        return -tau * np.log1p(-u)
    return tau / kappa * np.expm1(-kappa * np.log1p(-u))


@dataclass(frozen=True)
class SpacingCheck:
    lhs_log: float
    rhs_log: float
    unif_lhs_log: float
    unif_rhs_log: float
    holds: bool


def spacing_bound_check(sample, fit, theta0) -> SpacingCheck:
    """Order-statistic spacing bounds at the fitted endpoint.

    lhs_log = sum_{j>=2} log[(Y_(j) - beta_hat) / (Y_(j) - Y_(1))] must be below
    rhs_log = log[tau0 exp(4n/xi0) / (2^n xi0 (Y_(1) - beta_hat))], and
    sum_{j>=2} log[xi0 (Y_(j) - Y_(1)) / tau0] must be at least
    n xi0 gamma - 4n / xi0.
    """
    if not theta0.xi > 0:
        raise ValueError("spacing bounds need xi0 > 0")
    th = fit.theta_hat
    if not th.xi > 0:
        raise ValueError("spacing bounds need a fit with xi_hat > 0")
    y = sample.values
    n = y.size
    beta_hat = th.mu - th.tau / th.xi
    gap = y[0] - beta_hat
    spacings = y[1:] - y[0]
    with np.errstate(divide="ignore"):
        lhs = float(np.sum(np.log(y[1:] - beta_hat)) - np.sum(np.log(spacings)))
        rhs = math.log(theta0.tau) + 4.0 * n / theta0.xi - n * math.log(2.0) - math.log(theta0.xi) - math.log(gap)
        unif_lhs = float(np.sum(np.log(theta0.xi * spacings / theta0.tau)))
    unif_rhs = n * theta0.xi * EULER_GAMMA - 4.0 * n / theta0.xi
    return SpacingCheck(lhs, rhs, unif_lhs, unif_rhs, bool(lhs < rhs and unif_lhs >= unif_rhs))
