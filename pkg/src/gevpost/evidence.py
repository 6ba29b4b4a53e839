"""Normalizing constant C_n by quadrature over Omega_n, and its region split.

For a prior g(xi) / tau the tau integral is closed form.  With
u_i = |Y_i - beta| (beta < Y_(1) when xi > 0, beta > Y_(n) when xi < 0),

    int L_n(theta) g(xi) / tau dtau
        = g(xi) Gamma(n) |xi|^(1-n) prod u_i^(-1/xi-1) / (sum u_i^(-1/xi))^n,

and restricting tau < tau_c (tau > tau_c) multiplies this by P(n, z) (Q(n, z))
with z = |xi|^(-1/xi) tau_c^(1/xi) sum u_i^(-1/xi)  (P and Q swap for xi < 0).

The remaining beta integral is done in eta = log u_ref, u_ref = |Y_ref - beta|,
Y_ref the sample extreme next to the endpoint, so u_i = u_ref (1 + d_i e^-eta)
and every term stays O(n) even as xi -> 0.  The xi-marginal obtained this way
is smooth through xi = 0, so no separate seam treatment is needed beyond
never evaluating at xi = 0 itself.

All integrals are formed in log space by `log_integrate_peak`: locate the
mode, bracket until the log integrand drops by LOG_DROP, then composite
Gauss-Legendre on panels that widen geometrically away from the mode.  The
error is the difference between two refinement levels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.special import gammaln, logsumexp

from .estimation import MleFit, fit as mle_fit, observed_info
from .gev_core import XI_MIN, GevParams, Sample, to_beta
from .likelihood import log_likelihood_batch
from .priors import PriorSpec, log_prior_batch
from .specfun import EULER_GAMMA, log_reg_inc_gamma

LOG_DROP = 60.0
REDUCED = "reduced-2d"
FULL = "full-3d"


# -- 1D peaked log-integration ----------------------------------------------


def _lse(a, axis=None):
    """logsumexp for real arrays without scipy's per-call overhead; -inf rows stay -inf."""
    a = np.asarray(a, dtype=float)
    m = np.max(a, axis=axis, keepdims=True)
    m = np.where(np.isfinite(m), m, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True)) + m
    return np.squeeze(out, axis=axis) if axis is not None else float(out.ravel()[0])


@dataclass(frozen=True)
class LogQuad:
    log_value: float
    rel_err: float
    mode: float
    converged: bool
    n_evals: int
    scale: float = math.nan   # curvature scale at the mode


_GL = {m: np.polynomial.legendre.leggauss(m) for m in (8, 10, 12, 16, 20)}


def _gl_nodes(edges, order):
    x, w = _GL[order]
    a, b = edges[:-1, None], edges[1:, None]
    half = 0.5 * (b - a)
    return (a + half * (x + 1.0)).ravel(), (half * w).ravel()


def log_integrate_peak(phi, search, domain=(-np.inf, np.inf), start=None, rtol=1e-10,
                       drop=LOG_DROP, grid=48, order=10, max_levels=6) -> LogQuad:
    """log of int exp(phi(x)) dx over `domain` for a vectorized, unimodal-ish phi."""
    dlo, dhi = float(domain[0]), float(domain[1])
    evals = 0

    def ev(x):
        nonlocal evals
        x = np.atleast_1d(np.asarray(x, dtype=float))
        evals += x.size
        v = np.asarray(phi(x), dtype=float)
        return np.where(np.isnan(v), -np.inf, v)

    def inside(x):
        span = 1e-12 * (1.0 + abs(x))
        return min(max(x, dlo + span), dhi - span) if np.isfinite(dlo) or np.isfinite(dhi) else x

    # 1. locate the mode
    if start is not None and dlo < start[0] < dhi and start[1] > 0:
        xs = np.unique([inside(v) for v in start[0] + start[1] * np.linspace(-8, 8, 17)])
    else:
        a, b = inside(max(search[0], dlo)), inside(min(search[1], dhi))
        xs = np.linspace(a, b, grid)
    v = ev(xs)
    for _ in range(60):
        if not np.any(np.isfinite(v)):
            break
        k = int(np.argmax(v))
        span = xs[-1] - xs[0]
        if k == 0 and xs[0] > dlo + 1e-12 * (1 + abs(xs[0])):
            new = np.linspace(inside(xs[0] - span), xs[0], 9)[:-1]
        elif k == len(xs) - 1 and xs[-1] < dhi - 1e-12 * (1 + abs(xs[-1])):
            new = np.linspace(xs[-1], inside(xs[-1] + span), 9)[1:]
        else:
            break
        xs = np.concatenate([xs, new])
        v = np.concatenate([v, ev(new)])
        order_idx = np.argsort(xs)
        xs, v = xs[order_idx], v[order_idx]
    if not np.any(np.isfinite(v)):
        return LogQuad(-math.inf, 0.0, math.nan, True, evals)
    k = int(np.argmax(v))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, len(xs) - 1)]
    x0, f0 = xs[k], v[k]
    if hi > lo:
        res = optimize.minimize_scalar(lambda t: -ev(t)[0], bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-10 * (1.0 + abs(x0))})
        if np.isfinite(res.fun) and -res.fun > f0:
            x0, f0 = float(res.x), float(-res.fun)

    # 2. local scale from the curvature
    e = max((hi - lo) / 50.0, 1e-9 * (1.0 + abs(x0)))
    fl, fr = ev([inside(x0 - e), inside(x0 + e)])
    curv = (fl + fr - 2.0 * f0) / (e * e)
    sig = 1.0 / math.sqrt(-curv) if np.isfinite(curv) and curv < 0 else max(hi - lo, e)
    sig = min(sig, max(hi - lo, e))

    # 3. bracket with geometric panels
    def side(direction, bound):
        edges = [x0]
        step = sig
        for _ in range(80):
            t = x0 + direction * step
            if (direction > 0 and t >= bound) or (direction < 0 and t <= bound):
                edges.append(bound)
                return edges, True
            edges.append(t)
            if ev(t)[0] < f0 - drop:
                return edges, True
            step *= 2.0
        return edges, False

    right, ok_r = side(+1, dhi)
    left, ok_l = side(-1, dlo)
    edges = np.array(sorted(set(left) | set(right)))
    edges = edges[np.isfinite(edges)]
    if edges.size < 2:
        return LogQuad(f0, 1.0, x0, False, evals)

    # 4. composite Gauss-Legendre with refinement
    edges = edges[np.concatenate([[True], np.diff(edges) > 0])]

    def level(ed):
        x, w = _gl_nodes(ed, order)
        keep = w > 0
        return float(_lse(ev(x[keep]) + np.log(w[keep])))

    prev = level(edges)
    err = math.inf
    for _ in range(max_levels):
        edges = np.sort(np.concatenate([edges, 0.5 * (edges[:-1] + edges[1:])]))
        cur = level(edges)
        if np.isfinite(cur) and np.isfinite(prev):
            err = abs(math.expm1(min(prev - cur, 700.0)))
        elif not np.isfinite(cur) and not np.isfinite(prev):
            err = 0.0
        else:
            err = math.inf
        prev = cur
        if err <= rtol:
            break
    return LogQuad(prev, err, x0, bool(err <= rtol and ok_l and ok_r), evals, sig)


# -- reduced (beta, xi) integrand ---------------------------------------------


class ReducedIntegrand:
    """log of the tau-integrated integrand as a function of (eta, xi)."""

    def __init__(self, s: Sample, pr: PriorSpec):
        if not pr.scale_invariant:
            raise ValueError("the tau reduction needs a prior of the form g(xi) / tau")
        self.s = s
        self.pr = pr
        y = s.values
        self.n = s.n
        with np.errstate(divide="ignore"):
            self._logd_pos = np.log(y - y[0])       # distances from Y_(1)
            self._logd_neg = np.log(y[-1] - y)       # distances from Y_(n)
        self.log_gamma_n = float(gammaln(self.n))
        self.scale = max(y[-1] - y[0], 1e-300)

    def log_f(self, eta, xi: float, log_tau_cut: float | None = None, upper: bool = False):
        """Log integrand at eta (array); optional tau < tau_c (or tau > tau_c if upper)."""
        eta = np.atleast_1d(np.asarray(eta, dtype=float))
        logd = self._logd_pos if xi > 0 else self._logd_neg
        r = np.logaddexp(0.0, logd[None, :] - eta[:, None])   # log(u_i / u_ref)
        lse = _lse(-r / xi, axis=1)
        n = self.n
        out = (float(self.pr.log_g(xi)) + self.log_gamma_n + (1 - n) * math.log(abs(xi))
               - (n - 1) * eta - (1.0 / xi + 1.0) * r.sum(axis=1) - n * lse)
        if log_tau_cut is not None:
            log_v = -eta / xi + lse
            log_z = (log_tau_cut - math.log(abs(xi))) / xi + log_v
            with np.errstate(over="ignore"):
                z = np.exp(np.minimum(log_z, 709.0))
            z = np.where(log_z > 709.0, np.inf, z)
            log_p, log_q = log_reg_inc_gamma(float(n), z)
            lower_tau = log_p if xi > 0 else log_q   # tau < tau_c
            out = out + (log_q if xi > 0 else log_p) if upper else out + lower_tau
        return out

    def eta_of_beta(self, beta: float, xi: float) -> float:
        ref = self.s.y_min if xi > 0 else self.s.y_max
        u = (ref - beta) if xi > 0 else (beta - ref)
        return math.log(u) if u > 0 else -math.inf

    def log_marginal(self, xi: float, eta_range=(-np.inf, np.inf), log_tau_cut=None,
                     upper=False, rtol=1e-11, hint=None) -> LogQuad:
        """log of the eta integral at fixed xi (the unnormalized xi marginal)."""
        if abs(xi) < 1e-12:
            xi = math.copysign(1e-12, xi if xi != 0 else 1.0)
        centre = math.log(self.scale)
        search = (centre - 30.0, centre + 30.0 + max(0.0, -math.log(abs(xi))))
        return log_integrate_peak(
            lambda e: self.log_f(e, xi, log_tau_cut, upper), search, domain=eta_range,
            start=hint, rtol=rtol, grid=48)


def reduced_integrand_log(beta: float, xi: float, s: Sample, pr: PriorSpec) -> float:
    """log of the tau-integrated integrand at (beta, xi); -inf outside Omega_n."""
    if xi == 0:
        raise ValueError("the reduced integrand is defined for xi != 0")
    if not xi > XI_MIN:
        return -math.inf
    model = ReducedIntegrand(s, pr)
    eta = model.eta_of_beta(beta, xi)
    if not np.isfinite(eta):
        return -math.inf
    # the integrand in eta carries the Jacobian u_ref = e^eta; remove it
    return float(model.log_f(eta, xi)[0] - eta)


# -- evidence -------------------------------------------------------------------


@dataclass(frozen=True)
class EvidenceResult:
    log_Cn: float
    abs_err_log: float
    method: str
    converged: bool = True
    region_log_masses: tuple | None = None
    ball_log_mass: float | None = None
    n_evals: int = 0

    def __post_init__(self):
        if not self.abs_err_log >= 0:
            raise ValueError("abs_err_log must be nonnegative")


def _xi_hint(s: Sample, fit: MleFit | None):
    if fit is None:
        try:
            fit = mle_fit(s)
        except (ValueError, np.linalg.LinAlgError):
            return None, None
    if not fit.converged:
        return fit, None
    sd = math.sqrt(max(observed_info(fit).inverse[2, 2], 1e-300))
    return fit, (fit.theta_hat.xi, sd)


class _XiMarginal:
    """Cached xi -> log marginal with a moving eta hint."""

    def __init__(self, model: ReducedIntegrand, rtol, **kw):
        self.model = model
        self.rtol = rtol
        self.kw = kw
        self.evals = 0
        self.records = []   # (log value, rel err, converged) per xi node
        self._hint = {+1: None, -1: None}

    def weighted(self, outer: LogQuad, tol: float):
        """(max inner error weighted by the node's share of the total, all within tol).

        A node's share is approximated by its integrand value times the
        width of the outer peak, relative to the total.
        """
        worst, ok = 0.0, True
        width = outer.scale if np.isfinite(outer.scale) and outer.scale > 0 else 1.0
        for lv, err, conv in self.records:
            if lv == -math.inf:
                continue
            share = min(1.0, width * math.exp(min(lv - outer.log_value, 0.0)))
            e = err * share if np.isfinite(err) else (math.inf if share > 1e-300 else 0.0)
            worst = max(worst, e)
            ok &= conv or e < tol
        return worst, ok

    def __call__(self, xis):
        out = np.empty(len(xis))
        for i, xi in enumerate(np.atleast_1d(xis)):
            sign = 1 if xi > 0 else -1
            q = self.model.log_marginal(xi, rtol=self.rtol, hint=self._hint[sign], **self.kw)
            if np.isfinite(q.log_value) and np.isfinite(q.mode) and q.scale > 0:
                self._hint[sign] = (q.mode, q.scale)
            self.records.append((q.log_value, q.rel_err, q.converged))
            self.evals += q.n_evals
            out[i] = q.log_value
        return out


def _reduced_region(model, xi_domain, hint, tol, eta_range=(-np.inf, np.inf),
                    log_tau_cut=None, upper=False) -> tuple:
    inner_rtol = max(tol * 0.01, 1e-13)
    marg = _XiMarginal(model, inner_rtol, eta_range=eta_range, log_tau_cut=log_tau_cut,
                       upper=upper)
    lo, hi = xi_domain
    search_hi = hi if np.isfinite(hi) else max(lo, 0.0) + 10.0
    use_hint = hint if hint is not None and lo < hint[0] < hi else None
    outer = log_integrate_peak(marg, (lo, search_hi), domain=(lo, hi), start=use_hint,
                               rtol=tol, grid=40)
    inner_err, inner_ok = marg.weighted(outer, tol)
    return outer.log_value, outer.rel_err + inner_err, outer.converged and inner_ok, outer.n_evals


def log_Cn(s: Sample, pr: PriorSpec, tol: float = 1e-8, method: str | None = None,
           fit: MleFit | None = None) -> EvidenceResult:
    """log C_n = log of int L_n(theta) pi(theta) dtheta over Omega_n."""
    if s.n < 3:
        raise ValueError("log_Cn needs n >= 3")
    if not tol > 0:
        raise ValueError("tol must be positive")
    if method is None:
        method = REDUCED if pr.scale_invariant else FULL
    if method == FULL:
        return log_Cn_full3d(s, pr, tol, fit=fit)
    if method != REDUCED:
        raise ValueError(f"unknown method {method!r}")
    model = ReducedIntegrand(s, pr)
    _, hint = _xi_hint(s, fit)
    # the xi marginal is smooth through 0, so one integral over (-1/2, inf)
    val, err, ok, evals = _reduced_region(model, (XI_MIN, np.inf), hint, tol)
    err_log = max(err, 1e-12 * max(1.0, abs(val)) * 1e-3)
    return EvidenceResult(val, err_log, REDUCED, ok, n_evals=evals)


# -- brute-force 3D ----------------------------------------------------------------
#
# Spherical-ray cubature in whitened coordinates theta = theta_hat + rho R^-T v,
# R the Cholesky factor of the observed information.  Each ray is cut at every
# crossing of the support boundaries (and any extra surfaces), so the radial
# integrand is smooth on each segment; Omega_n need not be star-shaped since
# segments outside it contribute nothing.


def _whitening(fit: MleFit):
    info = observed_info(fit)
    chol = np.linalg.cholesky(info.matrix)
    return fit.theta_hat.as_array(), chol, -0.5 * info.logdet


def _ray_segments(th_hat, d, s: Sample, extra_breaks=(), rho_cap=1e7) -> np.ndarray:
    """Sorted segment edges along theta_hat + rho d, rho in [0, rho_end]."""
    t0, m0, x0 = th_hat
    t1, m1, x1 = d
    br = list(extra_breaks)
    rho_end = rho_cap
    if t1 < 0:
        rho_end = min(rho_end, -t0 / t1)
    if x1 < 0:
        rho_end = min(rho_end, (XI_MIN - x0) / x1)
    if x1 != 0:
        br.append(-x0 / x1)
    for b in (s.y_min, s.y_max):
        # (mu - b) xi - tau = 0 along the ray
        qa = m1 * x1
        qb = (m0 - b) * x1 + m1 * x0 - t1
        qc = (m0 - b) * x0 - t0
        roots = np.roots([qa, qb, qc]) if qa != 0 else ([-qc / qb] if qb != 0 else [])
        for rt in np.atleast_1d(roots):
            if abs(np.imag(rt)) == 0 and np.real(rt) > 0:
                br.append(float(np.real(rt)))
    scale = 0.25 * 2.0 ** np.arange(64)
    edges = np.concatenate([[0.0, rho_end], np.asarray(br, dtype=float), scale[scale < rho_end]])
    edges = np.unique(edges[(edges >= 0) & (edges <= rho_end)])
    return edges[np.diff(edges, prepend=-1.0) > 1e-12 * max(1.0, rho_end)]


def _segment_log_masses(th_hat, d, edges, s: Sample, pr: PriorSpec, order=12) -> np.ndarray:
    """log of int rho^2 L pi d rho over each segment (no angular weight or Jacobian)."""
    x_gl, w_gl = _GL[order]
    a, b = edges[:-1], edges[1:]
    half = 0.5 * (b - a)
    rho = a[:, None] + half[:, None] * (x_gl + 1.0)
    th = th_hat + rho.reshape(-1, 1) * d
    lp = (log_likelihood_batch(th, s) + log_prior_batch(pr, th)).reshape(rho.shape)
    with np.errstate(divide="ignore"):
        terms = lp + np.log(half[:, None] * w_gl) + 2.0 * np.log(rho)
    return _lse(terms, axis=1)


def _ray_total(s, pr, th_hat, chol, log_jac, n_theta, n_phi, order=12) -> float:
    dirs, wts = _sphere_rule(n_theta, n_phi)
    out = []
    for v, wv in zip(dirs, wts):
        d = np.linalg.solve(chol.T, v)
        edges = _ray_segments(th_hat, d, s)
        out.append(_lse(_segment_log_masses(th_hat, d, edges, s, pr, order)) + math.log(wv))
    return float(logsumexp(out)) + log_jac


def log_Cn_full3d(s: Sample, pr: PriorSpec, tol: float = 1e-6, fit: MleFit | None = None,
                  n_theta: int = 32, n_phi: int = 64) -> EvidenceResult:
    """log C_n by ray cubature in (tau, mu, xi) without the tau reduction.

    The error estimate is the change against a rule with half the angular
    resolution in each direction.
    """
    if fit is None:
        fit = mle_fit(s)
    th_hat, chol, log_jac = _whitening(fit)
    fine = _ray_total(s, pr, th_hat, chol, log_jac, n_theta, n_phi)
    coarse = _ray_total(s, pr, th_hat, chol, log_jac, max(n_theta // 2, 2), max(n_phi // 2, 4))
    err = abs(fine - coarse)
    return EvidenceResult(fine, max(err, 1e-13), FULL, bool(err < tol * max(1.0, abs(fine))),
                          n_evals=(n_theta * n_phi + n_theta * n_phi // 4))


# -- regions -------------------------------------------------------------------------


@dataclass(frozen=True)
class RegionRadii:
    r: float
    r1: float
    r2: float
    r3: float                 # may be inf when tau0 + r3 overflows
    center: GevParams
    log_tau_cut: float        # log(tau0 + r3), always finite

    @property
    def xi_cut(self) -> float:
        return self.center.xi + self.r1

    @property
    def beta_cut(self) -> float:
        return to_beta(self.center).beta - self.r2

    def satisfied(self) -> bool:
        c = self.center
        t1 = 4.0 / c.xi - math.log(2.0) + EULER_GAMMA
        a = c.xi + self.r1 + 1.0
        t3 = a * math.log(a / math.e) + (1.0 + c.xi) * EULER_GAMMA + 1.0
        log1p_r3 = self.log_tau_cut - math.log(c.tau)
        return (math.log1p(self.r1 / c.xi) > t1 and self.r2 > 1.0 and log1p_r3 > t3
                and min(self.r1, self.r2, self.r3) > self.r)


def region_radii(theta0: GevParams, r: float = 0.2, margin: float = 0.01) -> RegionRadii:
    """Smallest radii meeting the three strict inequalities, inflated by `margin`."""
    if isinstance(theta0, MleFit):
        theta0 = theta0.theta_hat
    if not theta0.xi > 0:
        raise ValueError("the five-region partition is defined for xi0 > 0 only")
    xi0, tau0 = theta0.xi, theta0.tau
    grow = 1.0 + margin
    t1 = 4.0 / xi0 - math.log(2.0) + EULER_GAMMA
    r1 = xi0 * math.expm1(t1) * grow if t1 > 0 else 0.0
    r1 = max(r1, r * grow)
    r2 = max(1.0, r) * grow
    a = xi0 + r1 + 1.0
    t3 = a * math.log(a / math.e) + (1.0 + xi0) * EULER_GAMMA + 1.0
    # log(1 + grow * expm1(t3)) without overflow; t3 > 0 always here
    log1p_r3 = float(np.logaddexp(0.0, math.log(grow) + t3 + math.log1p(-math.exp(-t3))))
    # for tiny xi0, t3 is so large that the margin is below one ulp
    log1p_r3 = max(log1p_r3, float(np.nextafter(t3, math.inf)))
    r3 = tau0 * math.expm1(log1p_r3) if log1p_r3 < 700 else math.inf
    if r3 <= r:
        r3 = r * grow
        log1p_r3 = math.log1p(r3 / tau0)
    return RegionRadii(r, r1, r2, r3, theta0, math.log(tau0) + log1p_r3)


@dataclass(frozen=True)
class RegionMasses:
    log_masses: tuple          # Omega^1..Omega^5 (each outside the ball)
    ball_log_mass: float
    log_Cn: float
    abs_err_log: tuple         # per region, then ball
    ball_overlap: tuple        # log mass of ball intersected with Omega^k
    converged: tuple
    radii: RegionRadii = field(repr=False)

    def log_fractions(self) -> np.ndarray:
        return np.array(self.log_masses) - self.log_Cn

    @property
    def shell_fraction(self) -> float:
        """1 - (ball mass) / C_n."""
        return -math.expm1(self.ball_log_mass - self.log_Cn)

    def additivity_gap(self) -> float:
        total = logsumexp(list(self.log_masses) + [self.ball_log_mass])
        return float(total - self.log_Cn)


def _region_code(th, rr: RegionRadii, s: Sample, in_ball):
    """0 ball, 1..5 regions, -1 outside Omega_n (vectorized over rows)."""
    tau, mu, xi = th[:, 0], th[:, 1], th[:, 2]
    with np.errstate(divide="ignore", invalid="ignore"):
        beta = mu - tau / xi
    in_omega = (tau > 0) & (xi > XI_MIN) & np.where(xi > 0, beta < s.y_min, beta > s.y_max)
    code = np.full(th.shape[0], 1)
    code = np.where(xi < 0, 5, code)
    code = np.where((xi > 0) & (xi > rr.xi_cut), 2, code)
    with np.errstate(divide="ignore"):
        big_tau = np.log(np.where(tau > 0, tau, 1.0)) > rr.log_tau_cut
    code = np.where((xi > 0) & (xi <= rr.xi_cut) & big_tau, 4, code)
    code = np.where((xi > 0) & (xi <= rr.xi_cut) & ~big_tau & (beta < rr.beta_cut), 3, code)
    code = np.where(in_omega, code, -1)
    return code


def _sphere_rule(n_theta, n_phi):
    x, w = np.polynomial.legendre.leggauss(n_theta)
    phi = (np.arange(n_phi) + 0.5) * 2.0 * math.pi / n_phi
    st = np.sqrt(1.0 - x * x)
    dirs = np.stack([np.outer(st, np.cos(phi)).ravel(), np.outer(st, np.sin(phi)).ravel(),
                     np.repeat(x, n_phi)], axis=1)
    weights = np.repeat(w, n_phi) * (2.0 * math.pi / n_phi)
    return dirs, weights


def _ray_breaks(theta_hat, d, rr: RegionRadii, s: Sample, rho_ball):
    t0, m0, x0 = theta_hat
    t1, m1, x1 = d
    br = [rho_ball]

    def lin(c0, c1, target):
        if c1 != 0:
            rho = (target - c0) / c1
            if rho > 0:
                br.append(rho)

    lin(x0, x1, 0.0)
    lin(x0, x1, XI_MIN)
    lin(x0, x1, rr.xi_cut)
    lin(t0, t1, 0.0)
    if rr.log_tau_cut < 700:
        lin(t0, t1, math.exp(rr.log_tau_cut))
    for b in (rr.beta_cut, s.y_min, s.y_max):
        # (mu - b) xi - tau = 0 along the ray
        qa = m1 * x1
        qb = (m0 - b) * x1 + m1 * x0 - t1
        qc = (m0 - b) * x0 - t0
        roots = np.roots([qa, qb, qc]) if qa != 0 else ([-qc / qb] if qb != 0 else [])
        for rt in np.atleast_1d(roots):
            if np.isreal(rt) and np.real(rt) > 0:
                br.append(float(np.real(rt)))
    return br


def _ray_masses(s, pr, rr, fit, n_theta, n_phi, order=12):
    """Per-ray radial integrals in whitened coordinates; returns log masses by code."""
    info = observed_info(fit)
    chol = np.linalg.cholesky(info.matrix)
    th_hat = fit.theta_hat.as_array()
    log_jac = -0.5 * info.logdet
    dirs, wts = _sphere_rule(n_theta, n_phi)
    x_gl, w_gl = _GL[order]
    pieces = {k: [] for k in ("ball1", "ball2", "ball3", "ball4", "ball5", "shell1")}
    t0, _, x0 = th_hat
    for v, wv in zip(dirs, wts):
        d = np.linalg.solve(chol.T, v)
        rho_ball = rr.r / float(np.linalg.norm(d))
        # far end: leaving Theta or the cube's xi slab (cannot come back)
        exits = []
        if d[0] < 0:
            exits.append(-t0 / d[0])
        if d[2] > 0:
            exits.append((rr.xi_cut - x0) / d[2])
        elif d[2] < 0:
            exits.append((0.0 - x0) / d[2] if x0 > 0 else (XI_MIN - x0) / d[2])
        rho_end = max(rho_ball, min(exits) if exits else 1e8)
        if d[2] < 0:
            rho_end = min(rho_end, (XI_MIN - x0) / d[2])
        if d[0] < 0:
            rho_end = min(rho_end, -t0 / d[0])
        br = _ray_breaks(th_hat, d, rr, s, rho_ball)
        scale = [0.25 * 2.0**k for k in range(64) if 0.25 * 2.0**k < rho_end]
        edges = np.unique(np.clip(np.array([0.0, rho_end] + br + scale), 0.0, rho_end))
        a, b = edges[:-1], edges[1:]
        mid = 0.5 * (a + b)
        mid_th = th_hat + mid[:, None] * d
        codes = _region_code(mid_th, rr, s, None)
        in_ball = mid < rho_ball
        keep = (codes > 0) & (in_ball | (codes == 1))
        if not np.any(keep):
            continue
        a, b, codes, in_ball = a[keep], b[keep], codes[keep], in_ball[keep]
        half = 0.5 * (b - a)
        rho = (a[:, None] + half[:, None] * (x_gl + 1.0))
        w = half[:, None] * w_gl
        th = th_hat + rho.reshape(-1, 1) * d
        lp = (log_likelihood_batch(th, s) + log_prior_batch(pr, th)).reshape(rho.shape)
        with np.errstate(divide="ignore"):
            terms = lp + np.log(w) + 2.0 * np.log(rho) + math.log(wv) + log_jac
        for seg in range(len(a)):
            key = f"ball{codes[seg]}" if in_ball[seg] else "shell1"
            pieces[key].append(_lse(terms[seg]))
    return {k: (float(logsumexp(v)) if v else -math.inf) for k, v in pieces.items()}


def _log_diff(a, b):
    """log(e^a - e^b) for a >= b; -inf when the difference is not positive."""
    if b == -math.inf:
        return a
    if not a > b:
        return -math.inf
    return a + math.log(-math.expm1(b - a))


def region_masses(s: Sample, pr: PriorSpec, rr: RegionRadii, fit: MleFit, tol: float = 1e-8,
                  n_theta: int = 16, n_phi: int = 32, log_cn: EvidenceResult | None = None
                  ) -> RegionMasses:
    """Masses of B_r(theta_hat) and of Omega^k minus the ball, k = 1..5, in log space."""
    if not fit.theta_hat.xi > 0:
        raise ValueError("region masses are defined for xi_hat > 0 only")
    if not rr.satisfied():
        raise ValueError("radii do not satisfy the region constraints")
    model = ReducedIntegrand(s, pr)
    if log_cn is None:
        log_cn = log_Cn(s, pr, tol, fit=fit)
    _, hint = _xi_hint(s, fit)

    # Omega^2..Omega^5 over their full extent by the reduced integral
    eta_star = model.eta_of_beta(rr.beta_cut, 1.0)  # beta < beta* <=> eta > eta*
    specs = {
        2: dict(xi_domain=(rr.xi_cut, np.inf)),
        3: dict(xi_domain=(0.0, rr.xi_cut), eta_range=(eta_star, np.inf),
                log_tau_cut=rr.log_tau_cut),
        4: dict(xi_domain=(0.0, rr.xi_cut), log_tau_cut=rr.log_tau_cut, upper=True),
        5: dict(xi_domain=(XI_MIN, 0.0)),
    }
    # a region only needs relative accuracy tol * C_n / C_n^k, so pass once
    # at a loose tolerance and refine only where that is not enough
    loose = max(tol, 1e-3)
    full = {}
    for k, kw in specs.items():
        kw = dict(kw)
        dom = kw.pop("xi_domain")
        res = _reduced_region(model, dom, hint, loose, **kw)
        if loose > tol and np.isfinite(res[0]) and res[1] * math.exp(res[0] - log_cn.log_Cn) > tol:
            res = _reduced_region(model, dom, hint, tol, **kw)
        full[k] = res
    fine = _ray_masses(s, pr, rr, fit, n_theta, n_phi)
    coarse = _ray_masses(s, pr, rr, fit, max(n_theta // 2, 2), max(n_phi // 2, 4))

    def ray_err(key):
        a, b = fine[key], coarse[key]
        if a == -math.inf and b == -math.inf:
            return 0.0
        return abs(a - b) if np.isfinite(a - b) else math.inf

    ball_parts = [fine[f"ball{k}"] for k in range(1, 6)]
    ball = float(logsumexp(ball_parts))
    ball_err = abs(ball - float(logsumexp([coarse[f"ball{k}"] for k in range(1, 6)])))
    masses = [fine["shell1"]]
    errs = [ray_err("shell1")]
    conv = [True]
    for k in range(2, 6):
        val, err, ok, _ = full[k]
        masses.append(_log_diff(val, ball_parts[k - 1]))
        errs.append(err)
        conv.append(ok)
    return RegionMasses(tuple(masses), ball, log_cn.log_Cn, tuple(errs + [ball_err]),
                        tuple(ball_parts), tuple(conv), rr)
