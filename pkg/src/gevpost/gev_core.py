"""GEV distribution primitives: parameters, support geometry, density, sampling.

The shape parameter xi is treated as exactly zero (Gumbel branch) when
|xi| < GUMBEL_EPS.  Away from zero every expression goes through
log1p(xi * z), which has no cancellation as xi -> 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

GUMBEL_EPS = 1e-8
XI_MIN = -0.5


@dataclass(frozen=True)
class GevParams:
    """Scale tau > 0, location mu, shape xi."""

    tau: float
    mu: float
    xi: float

    def __post_init__(self):
        for name in ("tau", "mu", "xi"):
            v = float(getattr(self, name))
            if not math.isfinite(v):
                raise ValueError(f"{name} must be finite")
            object.__setattr__(self, name, v)
        if not self.tau > 0:
            raise ValueError("tau must be positive")

    @classmethod
    def from_array(cls, arr) -> "GevParams":
        tau, mu, xi = (float(v) for v in arr)
        return cls(tau, mu, xi)

    def as_array(self) -> np.ndarray:
        return np.array([self.tau, self.mu, self.xi])

    @property
    def in_theta(self) -> bool:
        """Inside the working parameter space tau > 0, xi > -1/2."""
        return self.xi > XI_MIN

    @property
    def is_gumbel(self) -> bool:
        return abs(self.xi) < GUMBEL_EPS


@dataclass(frozen=True)
class GevParamsBeta:
    """(tau, beta, xi) coordinates, beta = mu - tau / xi the support endpoint."""

    tau: float
    beta: float
    xi: float

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.xi == 0:
            raise ValueError("beta coordinates are undefined at xi = 0")


def to_beta(p: GevParams) -> GevParamsBeta:
    if p.xi == 0:
        raise ValueError("beta coordinates are undefined at xi = 0")
    return GevParamsBeta(p.tau, p.mu - p.tau / p.xi, p.xi)


def from_beta(b: GevParamsBeta) -> GevParams:
    return GevParams(b.tau, b.beta + b.tau / b.xi, b.xi)


class Sample:
    """Observations stored in ascending order."""

    __slots__ = ("_values",)

    def __init__(self, values):
        arr = np.sort(np.asarray(values, dtype=float).ravel())
        if arr.size < 1:
            raise ValueError("a sample needs at least one observation")
        if not np.all(np.isfinite(arr)):
            raise ValueError("observations must be finite")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    @property
    def n(self) -> int:
        return self._values.size

    @property
    def y_min(self) -> float:
        return float(self._values[0])

    @property
    def y_max(self) -> float:
        return float(self._values[-1])

    def __len__(self):
        return self.n

    def __repr__(self):
        return f"Sample(n={self.n}, min={self.y_min:.6g}, max={self.y_max:.6g})"

    def affine(self, shift: float, scale: float) -> "Sample":
        """Sample of shift + scale * Y (scale > 0)."""
        if not scale > 0:
            raise ValueError("scale must be positive")
        return Sample(shift + scale * self._values)


def _log_t(p: GevParams, y):
    """log w^{-1/xi} and log w (Gumbel: -z and 0), nan outside the support."""
    z = (np.asarray(y, dtype=float) - p.mu) / p.tau
    if p.is_gumbel:
        return -z, np.zeros_like(z)
    xz = p.xi * z
    log_w = np.log1p(np.where(xz > -1.0, xz, np.nan))
    return -log_w / p.xi, log_w


def gev_cdf(p: GevParams, y):
    """Distribution function; 0 below / 1 above a finite endpoint."""
    log_t, _ = _log_t(p, y)
    out = np.exp(-np.exp(log_t))
    if not p.is_gumbel:
        outside = np.isnan(log_t)
        out = np.where(outside, 0.0 if p.xi > 0 else 1.0, out)
    return out if np.ndim(out) else float(out)


def gev_log_pdf(p: GevParams, y):
    """log density, -inf outside the support."""
    log_t, log_w = _log_t(p, y)
    with np.errstate(over="ignore"):
        out = -math.log(p.tau) - log_w + log_t - np.exp(log_t)
    out = np.where(np.isnan(out), -np.inf, out)
    return out if np.ndim(out) else float(out)


def gev_quantile(p: GevParams, q):
    q_arr = np.asarray(q, dtype=float)
    if np.any(~((q_arr > 0) & (q_arr < 1))):
        raise ValueError("q must lie in (0, 1)")
    e = -np.log(q_arr)  # Exp(1) variate, = w^{-1/xi}
    if p.is_gumbel:
        out = p.mu - p.tau * np.log(e)
    else:
        # (e^{-xi} - 1) / xi without cancellation
        out = p.mu + p.tau * np.expm1(-p.xi * np.log(e)) / p.xi
    return out if np.ndim(out) else float(out)


def rng_from_seed(seed: int) -> np.random.Generator:
    """Counter-based Philox4x64 stream; identical seeds give identical draws."""
    return np.random.Generator(np.random.Philox(int(seed)))


def gev_sample(p: GevParams, n: int, seed: int) -> Sample:
    if n < 1:
        raise ValueError("n must be at least 1")
    u = rng_from_seed(seed).random(n)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    return Sample(gev_quantile(p, u))


class WValues(NamedTuple):
    values: np.ndarray
    gumbel: bool


def w_values(p: GevParams, s: Sample) -> WValues:
    """w_i = 1 + xi (Y_i - mu) / tau.  At xi = 0 the standardized z_i are returned with gumbel=True."""
    z = (s.values - p.mu) / p.tau
    if p.is_gumbel:
        return WValues(z, True)
    return WValues(1.0 + p.xi * z, False)


def w_values_beta(p: GevParams, s: Sample) -> np.ndarray:
    """The same w_i written as (xi / tau)(Y_i - beta)."""
    b = to_beta(p)
    return (b.xi / b.tau) * (s.values - b.beta)


def omega_contains(p: GevParams, s: Sample) -> bool:
    """True when every observation lies inside the support of P_theta."""
    if p.is_gumbel:
        return True
    beta = p.mu - p.tau / p.xi
    if p.xi > 0:
        return beta < s.y_min and 1.0 + p.xi * (s.y_min - p.mu) / p.tau > 0
    return beta > s.y_max and 1.0 + p.xi * (s.y_max - p.mu) / p.tau > 0
