"""Priors of the form g(xi) / tau and proper priors on Theta.

Scale-invariant priors are improper and only defined up to an additive
constant in log space.  Every downstream quantity that uses them (C_n, B_n,
region masses) inherits the same constant, so differences and ratios are
unaffected.

The shape factors are built from module-level functions bound with
functools.partial so that a PriorSpec can be pickled for process pools.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import numpy as np
from scipy import stats

from .gev_core import XI_MIN, GevParams

SCALE_INVARIANT = "scale-invariant"
PROPER = "proper-continuous"


@dataclass(frozen=True)
class PriorSpec:
    kind: str
    name: str
    log_g: Callable | None = None
    alpha: float | None = None
    proper_log_density: Callable | None = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind == SCALE_INVARIANT and self.log_g is None:
            raise ValueError("a scale-invariant prior needs log_g")
        if self.kind == PROPER and self.proper_log_density is None:
            raise ValueError("a proper prior needs proper_log_density")
        if self.kind not in (SCALE_INVARIANT, PROPER):
            raise ValueError(f"unknown prior kind {self.kind!r}")

    @property
    def scale_invariant(self) -> bool:
        return self.kind == SCALE_INVARIANT

    def describe(self) -> str:
        if not self.params:
            return self.name
        return self.name + ":" + ",".join(f"{k}={v!r}" for k, v in sorted(self.params.items()))


def log_prior(pr: PriorSpec, p: GevParams) -> float:
    """log pi(theta); -inf outside Theta."""
    if not p.xi > XI_MIN:
        return -math.inf
    if pr.scale_invariant:
        return float(pr.log_g(p.xi)) - math.log(p.tau)
    return float(pr.proper_log_density(p.tau, p.mu, p.xi))


# -- shape-factor catalog -----------------------------------------------------


def _log_flat(xi):
    return np.zeros_like(np.asarray(xi, dtype=float))


def _log_power(xi, alpha):
    return alpha * np.log1p(np.asarray(xi, dtype=float))


def _log_cauchy(xi):
    xi = np.asarray(xi, dtype=float)
    return -np.log1p(xi * xi)


def _log_exp_decay(xi, rate, cut, power):
    # e^{-rate xi} up to `cut`, continued by a power tail so that g stays
    # regularly varying (index -power)
    xi = np.asarray(xi, dtype=float)
    tail = -rate * cut - power * np.log(np.maximum(xi, cut) / cut)
    return np.where(xi <= cut, -rate * xi, tail)


def _log_jeffreys_like(xi):
    # diverges at the left edge of Theta, like the GEV Jeffreys prior
    xi = np.asarray(xi, dtype=float)
    return -np.log(xi - XI_MIN)


def _log_exponential_growth(xi):
    return np.asarray(xi, dtype=float)


def _log_normal_prior(tau, mu, xi, sd_log_tau, sd_mu, sd_xi):
    tau, mu, xi = np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (tau, mu, xi)))
    ok = (tau > 0) & (xi > XI_MIN)
    log_tau = np.log(np.where(ok, tau, 1.0))
    out = (stats.norm.logpdf(log_tau, scale=sd_log_tau) - log_tau
           + stats.norm.logpdf(mu, scale=sd_mu)
           + stats.norm.logpdf(xi, scale=sd_xi) - stats.norm.logsf(XI_MIN, scale=sd_xi))
    out = np.where(ok, out, -np.inf)
    return out if out.ndim else float(out)


def flat() -> PriorSpec:
    return PriorSpec(SCALE_INVARIANT, "flat", _log_flat, 0.0)


def power(alpha: float = 1.0) -> PriorSpec:
    """g(xi) = (1 + xi)^alpha."""
    alpha = float(alpha)
    return PriorSpec(SCALE_INVARIANT, "power", partial(_log_power, alpha=alpha), alpha,
                     params={"alpha": alpha})


def cauchy() -> PriorSpec:
    """g(xi) = 1 / (1 + xi^2)."""
    return PriorSpec(SCALE_INVARIANT, "cauchy", _log_cauchy, -2.0)


def exp_decay(rate: float = 1.0, cut: float = 10.0, power: float = 2.0) -> PriorSpec:
    rate, cut, power = float(rate), float(cut), float(power)
    if not (rate >= 0 and cut > 0 and power >= 0):
        raise ValueError("need rate >= 0, cut > 0, power >= 0")
    return PriorSpec(SCALE_INVARIANT, "exp_decay",
                     partial(_log_exp_decay, rate=rate, cut=cut, power=power), -power,
                     params={"rate": rate, "cut": cut, "power": power})


def jeffreys_like() -> PriorSpec:
    """g(xi) = 1 / (xi + 1/2); violates boundedness near xi = -1/2."""
    return PriorSpec(SCALE_INVARIANT, "jeffreys_like", _log_jeffreys_like, -1.0)


def exponential_growth() -> PriorSpec:
    """g(xi) = e^xi; not regularly varying."""
    return PriorSpec(SCALE_INVARIANT, "exponential_growth", _log_exponential_growth, None)


def normal(sd_log_tau: float = 1.0, sd_mu: float = 10.0, sd_xi: float = 1.0) -> PriorSpec:
    """Proper: log tau ~ N(0, sd), mu ~ N(0, sd), xi ~ N(0, sd) truncated to xi > -1/2."""
    kw = {"sd_log_tau": float(sd_log_tau), "sd_mu": float(sd_mu), "sd_xi": float(sd_xi)}
    return PriorSpec(PROPER, "normal", proper_log_density=partial(_log_normal_prior, **kw),
                     params=kw)


def custom(log_g: Callable, alpha: float | None = None, name: str = "custom") -> PriorSpec:
    """User-supplied shape factor; log_g must be pure and accept numpy arrays."""
    return PriorSpec(SCALE_INVARIANT, name, log_g, alpha)


CATALOG: dict[str, Callable[..., PriorSpec]] = {
    "flat": flat,
    "power": power,
    "cauchy": cauchy,
    "exp_decay": exp_decay,
    "jeffreys_like": jeffreys_like,
    "exponential_growth": exponential_growth,
    "normal": normal,
}


def register_prior(name: str, factory: Callable[..., PriorSpec]) -> None:
    if name in CATALOG:
        raise ValueError(f"prior {name!r} already registered")
    CATALOG[name] = factory


def parse_prior(text: str) -> PriorSpec:
    """'name' or 'name:key=value,key=value'."""
    name, _, rest = text.partition(":")
    name = name.strip()
    if name not in CATALOG:
        raise ValueError(f"unknown prior {name!r}; known: {sorted(CATALOG)}")
    kwargs = {}
    if rest.strip():
        for item in rest.split(","):
            key, eq, value = item.partition("=")
            if not eq:
                raise ValueError(f"malformed prior parameter {item!r}")
            kwargs[key.strip()] = float(value)
    return CATALOG[name](**kwargs)


# -- Condition 1 -------------------------------------------------------------


@dataclass(frozen=True)
class Condition1Report:
    bounded_ok: bool
    rv_index_estimate: float
    rv_ok: bool
    sup_log_g: dict
    slopes: dict


def validate_condition1(pr: PriorSpec, cs=(0.0, 1.0, 5.0, 20.0),
                        xis=(1e2, 1e3, 1e4), ts=(2.0, 5.0), rel_tol: float = 0.05) -> Condition1Report:
    """Numerical check of boundedness on [-1/2, c] and regular variation of g."""
    if not pr.scale_invariant:
        raise ValueError("Condition 1 checks apply to scale-invariant priors")
    log_g = pr.log_g

    # approach the left edge geometrically; a growth of more than a factor 10
    # between 1e-6 and 1e-12 from the edge counts as divergence
    edge = XI_MIN + np.logspace(-1, -12, 12)
    with np.errstate(all="ignore"):
        edge_vals = np.asarray(log_g(edge), dtype=float)
    edge_ok = bool(np.all(np.isfinite(edge_vals)) and edge_vals[-1] - edge_vals[5] < math.log(10))
    sup = {}
    bounded = edge_ok
    for c in cs:
        grid = np.concatenate([edge, np.linspace(XI_MIN, c, 2001)[1:]])
        with np.errstate(all="ignore"):
            vals = np.asarray(log_g(grid), dtype=float)
        sup[c] = float(np.max(vals)) if np.all(np.isfinite(vals) | (vals == -np.inf)) else math.inf
        bounded = bounded and math.isfinite(sup[c])

    slopes = {}
    with np.errstate(all="ignore"):
        for x in xis:
            for t in ts:
                slopes[(x, t)] = float((log_g(t * x) - log_g(x)) / math.log(t))
    last = [slopes[(xis[-1], t)] for t in ts]
    prev = [slopes[(xis[-2], t)] for t in ts]
    estimate = float(np.mean(last))
    target = pr.alpha if pr.alpha is not None else estimate
    band = rel_tol * max(1.0, abs(target))
    finite = all(math.isfinite(v) for v in last + prev)
    rv_ok = finite and all(abs(v - target) <= band for v in last + prev)
    return Condition1Report(bounded, estimate, bool(rv_ok), sup,
                            {f"{x:g}@{t:g}": v for (x, t), v in slopes.items()})


def log_prior_batch(pr: PriorSpec, thetas) -> np.ndarray:
    """log_prior for each row (tau, mu, xi); proper densities must accept arrays."""
    th = np.atleast_2d(np.asarray(thetas, dtype=float))
    tau, mu, xi = th[:, 0], th[:, 1], th[:, 2]
    ok = (xi > XI_MIN) & (tau > 0)
    with np.errstate(all="ignore"):
        if pr.scale_invariant:
            out = np.asarray(pr.log_g(xi), dtype=float) - np.log(np.where(tau > 0, tau, 1.0))
        else:
            out = np.asarray(pr.proper_log_density(np.where(ok, tau, 1.0), mu, xi), dtype=float)
    return np.where(ok, out, -np.inf)
