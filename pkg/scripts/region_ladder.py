"""Posterior mass fractions of the outer regions and the shell along an n ladder."""

import argparse
from dataclasses import dataclass

import numpy as np

from gevpost.estimation import fit
from gevpost.evidence import region_masses, region_radii
from gevpost.gev_core import GevParams, gev_sample
from gevpost.priors import flat


@dataclass(frozen=True)
class RegionConfig:
    theta0: tuple = (1.0, 0.0, 0.5)
    ns: tuple = (200, 500, 2000)
    seed: int = 1
    radius: float = 0.2
    tol: float = 1e-6


def main():
    d = RegionConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default=",".join(map(str, d.ns)))
    ap.add_argument("--seed", type=int, default=d.seed)
    ap.add_argument("--radius", type=float, default=d.radius)
    ap.add_argument("--tol", type=float, default=d.tol)
    a = ap.parse_args()
    cfg = RegionConfig(d.theta0, tuple(int(v) for v in a.ns.split(",")), a.seed, a.radius, a.tol)
    print("n, shell_fraction, log(C^k/C) for k = 1..5")
    for n in cfg.ns:
        s = gev_sample(GevParams(*cfg.theta0), n, seed=cfg.seed)
        f = fit(s)
        rm = region_masses(s, flat(), region_radii(f.theta_hat, r=cfg.radius), f, cfg.tol)
        print(n, f"{rm.shell_fraction:.3e}", np.round(rm.log_fractions(), 3).tolist())


if __name__ == "__main__":
    main()
