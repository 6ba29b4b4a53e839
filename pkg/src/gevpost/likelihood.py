"""Joint GEV log-likelihood with analytic score and Hessian.

Write w = 1 + xi (y - mu) / tau, A = log w and t = w^(-1/xi).  Per observation

    l = -log tau + f(xi, A),    f = -(1 + 1/xi) A - exp(-A / xi),

so every first and second derivative is a polynomial in W = 1/w, t and A
with coefficients depending on (tau, xi) only.  Summing over the sample
turns each monomial W^k t^a A^b into

    S(k, a, b) = sum_i w_i^(-k - a/xi) log^b w_i,     k, b in {0,1,2}, a in {0,1},

which is what `sum_stat` returns.  `derivative_polys` builds the
coefficient tables once; `hessian` evaluates them on sample sums and the
estimation module evaluates the same tables on the almost-sure limits of
S / n.  For example the (mu, mu) entry is

    H_mu,mu = [xi (1 + xi) S(2,0,0) - (1 + xi) S(2,1,0)] / tau^2.

The coefficients carry powers of 1/xi up to four and cancel badly for
small |xi|, so `score_and_hessian` works with q = log1p(xi z) / xi instead,
which is analytic through xi = 0.  The table form is kept for the limits
and as a cross-check (`hessian_from_sums`).
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import NamedTuple

import numpy as np

from .gev_core import GevParams, Sample, gev_log_pdf, omega_contains

_SERIES_X = 0.05

PARAM_NAMES = ("tau", "mu", "xi")


class OutOfSupport(ValueError):
    """Raised when derivatives are requested outside Omega_n."""


class SumStatIndex(NamedTuple):
    k: int
    a: int
    b: int

    def check(self) -> "SumStatIndex":
        if self.k not in (0, 1, 2) or self.a not in (0, 1) or self.b not in (0, 1, 2):
            raise ValueError(f"index out of range: {tuple(self)}")
        return self


# -- monomial algebra --------------------------------------------------------


class Poly(dict):
    """Map (k, a, b) -> coefficient for the monomial W^k t^a A^b."""

    def __add__(self, other):
        out = Poly(self)
        for key, c in other.items():
            out[key] = out.get(key, 0.0) + c
        return out

    def __mul__(self, other):
        if not isinstance(other, Poly):
            return Poly({key: c * other for key, c in self.items()})
        out = defaultdict(float)
        for (k1, a1, b1), c1 in self.items():
            for (k2, a2, b2), c2 in other.items():
                out[(k1 + k2, a1 + a2, b1 + b2)] += c1 * c2
        return Poly(out)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-other)


_ONE = Poly({(0, 0, 0): 1.0})
_W = Poly({(1, 0, 0): 1.0})
_T = Poly({(0, 1, 0): 1.0})
_A = Poly({(0, 0, 1): 1.0})


def derivative_polys(tau: float, xi: float):
    """Coefficient tables (score[3], hessian[3][3]) for xi != 0."""
    f_a = -(1.0 + 1.0 / xi) * _ONE + (1.0 / xi) * _T
    f_aa = (-1.0 / xi**2) * _T
    f_x = (1.0 / xi**2) * (_A - _T * _A)
    f_ax = (1.0 / xi**2) * (_ONE - _T) + (1.0 / xi**3) * (_T * _A)
    f_xx = (-2.0 / xi**3) * (_A - _T * _A) - (1.0 / xi**4) * (_T * _A * _A)

    one_m_w = _ONE - _W
    d1 = [(-1.0 / tau) * one_m_w, (-xi / tau) * _W, (1.0 / xi) * one_m_w]
    w2 = _W * _W
    d2 = [
        [(1.0 / tau**2) * (_ONE - w2), (xi / tau**2) * w2, (-1.0 / (xi * tau)) * (_W - w2)],
        [None, (-(xi**2) / tau**2) * w2, (-1.0 / tau) * w2],
        [None, None, (-1.0 / xi**2) * (one_m_w * one_m_w)],
    ]
    for i in range(3):
        for j in range(i):
            d2[i][j] = d2[j][i]

    score = [f_a * d1[i] for i in range(3)]
    score[0] = score[0] + (-1.0 / tau) * _ONE
    score[2] = score[2] + f_x

    hess = [[None] * 3 for _ in range(3)]
    for i in range(3):
        for j in range(i, 3):
            h = f_aa * (d1[i] * d1[j]) + f_a * d2[i][j]
            if j == 2:
                h = h + f_ax * d1[i]
            if i == 2:
                h = h + f_ax * d1[j]
            if i == j == 2:
                h = h + f_xx
            if i == j == 0:
                h = h + (1.0 / tau**2) * _ONE
            hess[i][j] = hess[j][i] = h
    return score, hess


def evaluate_poly(poly: Poly, stats) -> float:
    """Sum of coefficient * stats[k, a, b]; stats may be sample sums or limits."""
    return float(math.fsum(c * stats[k, a, b] for (k, a, b), c in poly.items()))


# -- sums --------------------------------------------------------------------


def _check_support(p: GevParams, s: Sample):
    if not omega_contains(p, s):
        raise OutOfSupport(f"{p} lies outside the support of the sample")


def sum_stats(p: GevParams, s: Sample) -> np.ndarray:
    """All S(k, a, b) as an array indexed [k, a, b] (shape 3 x 2 x 3)."""
    _check_support(p, s)
    out = np.zeros((3, 2, 3))
    if p.is_gumbel:
        z = (s.values - p.mu) / p.tau
        out[:, 0, 0] = s.n
        out[:, 1, 0] = np.sum(np.exp(-z))
        return out
    z = (s.values - p.mu) / p.tau
    log_w = np.log1p(p.xi * z)
    inv_w = np.exp(-log_w)
    t = np.exp(-log_w / p.xi)
    w_pow = [np.ones_like(log_w), inv_w, inv_w * inv_w]
    t_pow = [np.ones_like(log_w), t]
    a_pow = [np.ones_like(log_w), log_w, log_w * log_w]
    for k in range(3):
        for a in range(2):
            base = w_pow[k] * t_pow[a]
            for b in range(3):
                out[k, a, b] = np.sum(base * a_pow[b])
    return out


def sum_stat(p: GevParams, s: Sample, idx) -> float:
    """S(k, a, b) = sum_i w_i^(-k - a/xi) log^b w_i."""
    k, a, b = SumStatIndex(*idx).check()
    return float(sum_stats(p, s)[k, a, b])


# -- likelihood and derivatives ---------------------------------------------


def log_likelihood(p: GevParams, s: Sample) -> float:
    """Sum of log densities; -inf outside Omega_n."""
    if not omega_contains(p, s):
        return -math.inf
    return float(np.sum(gev_log_pdf(p, s.values)))


_K = np.arange(0, 24)
_H0_COEF = (-1.0) ** _K / (_K + 1.0)
_H1_COEF = ((-1.0) ** _K * _K / (_K + 1.0))[1:]
_H2_COEF = ((-1.0) ** _K * _K * (_K - 1.0) / (_K + 1.0))[2:]


def _h_series(x):
    """h, h', h'' for h(x) = log1p(x) / x, with a power series near x = 0."""
    small = np.abs(x) < _SERIES_X
    xs = np.where(small, 1.0, x)
    l1p = np.log1p(xs)
    r = xs / (1.0 + xs)
    h0 = l1p / xs
    h1 = (r - l1p) / xs**2
    h2 = (2.0 * l1p - 2.0 * r - r * r) / xs**3
    if np.any(small):
        xz = np.where(small, x, 0.0)
        polyval = np.polynomial.polynomial.polyval
        h0 = np.where(small, polyval(xz, _H0_COEF), h0)
        h1 = np.where(small, polyval(xz, _H1_COEF), h1)
        h2 = np.where(small, polyval(xz, _H2_COEF), h2)
    return h0, h1, h2


def log_w_terms(p: GevParams, y):
    """(log w_i, log w_i / xi) per observation, the second stable through xi = 0."""
    z = (np.asarray(y, dtype=float) - p.mu) / p.tau
    x = p.xi * z
    return np.log1p(x), z * _h_series(x)[0]


def observation_terms(tau: float, mu: float, xi: float, y):
    """Per-observation gradient (3, m) and Hessian (3, 3, m) of log p(y | theta).

    Evaluated as l = -log tau - A - q - exp(-q) with A = log1p(xi z) and
    q = A / xi = z h(xi z), which is analytic through xi = 0.  The caller is
    responsible for 1 + xi z > 0.
    """
    y = np.atleast_1d(np.asarray(y, dtype=float))
    z = (y - mu) / tau
    x = xi * z
    w_inv = 1.0 / (1.0 + x)
    h0, h1, h2 = _h_series(x)
    t = np.exp(-z * h0)

    # derivatives in (z, xi); index 0 is A, index 1 is q
    g_z = (xi * w_inv, w_inv)
    g_x = (z * w_inv, z * z * h1)
    g_zz = (-(xi**2) * w_inv**2, -xi * w_inv**2)
    g_zx = (w_inv**2, -z * w_inv**2)
    g_xx = (-(z**2) * w_inv**2, z**3 * h2)

    z_t, z_m = -z / tau, -1.0 / tau
    z_tt, z_tm = 2.0 * z / tau**2, 1.0 / tau**2

    def first(k):
        return [g_z[k] * z_t, g_z[k] * z_m, g_x[k]]

    def second(k):
        return {
            (0, 0): g_zz[k] * z_t**2 + g_z[k] * z_tt,
            (0, 1): g_zz[k] * z_t * z_m + g_z[k] * z_tm,
            (1, 1): g_zz[k] * z_m**2,
            (0, 2): g_zx[k] * z_t,
            (1, 2): g_zx[k] * z_m,
            (2, 2): g_xx[k],
        }

    da, dq = first(0), first(1)
    ha, hq = second(0), second(1)
    one_m_t = 1.0 - t
    g = np.empty((3, y.size))
    for i in range(3):
        g[i] = -da[i] - one_m_t * dq[i]
    g[0] -= 1.0 / tau
    h = np.empty((3, 3, y.size))
    for (i, j), hq_ij in hq.items():
        h[i, j] = h[j, i] = -ha[i, j] - one_m_t * hq_ij - t * dq[i] * dq[j]
    h[0, 0] += 1.0 / tau**2
    return g, h


def score_and_hessian(p: GevParams, s: Sample):
    """(gradient, Hessian) of the log-likelihood in (tau, mu, xi).

    On sample sums this agrees with the `derivative_polys` tables; the
    per-observation form is used because it has no cancellation near xi = 0.
    """
    _check_support(p, s)
    g, h = observation_terms(p.tau, p.mu, p.xi, s.values)
    return g.sum(axis=1), h.sum(axis=2)


def score(p: GevParams, s: Sample) -> np.ndarray:
    return score_and_hessian(p, s)[0]


def hessian(p: GevParams, s: Sample) -> np.ndarray:
    return score_and_hessian(p, s)[1]


def hessian_from_sums(p: GevParams, s: Sample) -> np.ndarray:
    """The same Hessian assembled from S(k, a, b) sums (xi away from 0)."""
    if p.is_gumbel:
        raise ValueError("the sum representation needs xi != 0")
    stats = sum_stats(p, s)
    _, hess_p = derivative_polys(p.tau, p.xi)
    h = np.empty((3, 3))
    for i in range(3):
        for j in range(i, 3):
            h[i, j] = h[j, i] = evaluate_poly(hess_p[i][j], stats)
    return h


def log_likelihood_batch(thetas, s: Sample) -> np.ndarray:
    """log-likelihood for each row (tau, mu, xi) of `thetas`; -inf off the support."""
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    tau, mu, xi = th[:, :1], th[:, 1:2], th[:, 2:3]
    ok = (tau[:, 0] > 0) & np.isfinite(th).all(axis=1)
    tau_safe = np.where(tau > 0, tau, 1.0)
    z = (s.values[None, :] - mu) / tau_safe
    x = xi * z
    inside = x > -1.0
    x_safe = np.where(inside, x, 0.0)
    h0 = _h_series(x_safe)[0]
    q = z * h0
    with np.errstate(over="ignore"):
        terms = -np.log1p(x_safe) - q - np.exp(-q)
        out = terms.sum(axis=1) - s.n * np.log(tau_safe[:, 0])
    ok &= inside.all(axis=1)
    return np.where(ok & ~np.isnan(out), out, -np.inf)
