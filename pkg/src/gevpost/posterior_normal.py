"""Normal approximation to the posterior and the evidence lower bound B_n.

With theta_hat the local MLE and J = -L_n''(theta_hat) the observed
information,

    log B_n = (3/2) log 2 pi - (1/2) log det J + log pi(theta_hat)
              - n log tau_hat - n - (1 + 1/xi_hat) sum_i log w_i(theta_hat).

Because sum_i w_i^(-1/xi_hat) = n at the MLE, the last three terms equal
L_n(theta_hat); `log_Bn` can evaluate either form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .estimation import MleFit, NotPositiveDefinite, observed_info
from .gev_core import GevParams
from .likelihood import log_w_terms
from .priors import PriorSpec, log_prior
from .specfun import EULER_GAMMA

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class LaplaceFit:
    mean: GevParams
    precision: np.ndarray
    log_Bn: float
    covariance: np.ndarray
    chol: np.ndarray  # lower factor R with precision = R R^T

    def standardize(self, thetas) -> np.ndarray:
        """z = R^T (theta - theta_hat), row-wise."""
        d = np.atleast_2d(np.asarray(thetas, dtype=float)) - self.mean.as_array()
        return d @ self.chol

    def sample(self, size: int, rng: np.random.Generator) -> np.ndarray:
        z = rng.standard_normal((size, 3))
        return self.mean.as_array() + np.linalg.solve(self.chol.T, z.T).T


def log_Bn(fit: MleFit, pr: PriorSpec, route: str = "direct") -> float:
    """Log of the evidence lower bound at the fitted MLE."""
    info = observed_info(fit)
    th = fit.theta_hat
    lp = log_prior(pr, th)
    if not math.isfinite(lp):
        raise ValueError("prior is not evaluable at theta_hat")
    head = 1.5 * LOG_2PI - 0.5 * info.logdet + lp
    if route == "loglik":
        return head + fit.log_lik_at_max
    if route != "direct":
        raise ValueError(f"unknown route {route!r}")
    s = fit.sample
    log_w, q = log_w_terms(th, s.values)
    if not np.all(np.isfinite(log_w)):
        raise ValueError("w_i(theta_hat) <= 0 for some observation")
    n = s.n
    return head - n * math.log(th.tau) - n - float(math.fsum(log_w) + math.fsum(q))


def laplace_fit(fit: MleFit, pr: PriorSpec) -> LaplaceFit:
    if not fit.converged:
        raise NotPositiveDefinite("laplace_fit needs a converged fit")
    info = observed_info(fit)
    chol = np.linalg.cholesky(info.matrix)
    return LaplaceFit(fit.theta_hat, info.matrix, log_Bn(fit, pr), info.inverse, chol)


def bn_rate_limit(theta0: GevParams) -> float:
    """Almost-sure limit of B_n^(1/n): tau0^-1 exp(-(xi0 gamma + gamma + 1))."""
    return math.exp(-math.log(theta0.tau) - (theta0.xi * EULER_GAMMA + EULER_GAMMA + 1.0))


def _check_box(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError("a and b must have the same shape")
    if np.any(a > b):
        raise ValueError("need a <= b componentwise")
    return a, b


def gaussian_interval_probs(a, b) -> np.ndarray:
    """Phi(b_j) - Phi(a_j) per coordinate, computed on the accurate side."""
    a, b = _check_box(a, b)
    upper = a > 0  # both in the right tail: use survival functions
    return np.where(upper, special.ndtr(-a) - special.ndtr(-b), special.ndtr(b) - special.ndtr(a))


def gaussian_box_prob(a, b) -> float:
    """Standard trivariate normal probability of the box [a, b]."""
    return float(np.prod(gaussian_interval_probs(a, b)))
