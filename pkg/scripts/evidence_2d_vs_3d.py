"""Reduced two-dimensional evidence against brute-force three-dimensional cubature."""

import argparse
from dataclasses import dataclass

from gevpost.evidence import log_Cn, log_Cn_full3d
from gevpost.gev_core import GevParams, gev_sample
from gevpost.priors import flat


@dataclass(frozen=True)
class CompareConfig:
    ns: tuple = (10, 20, 30, 40, 50)
    xis: tuple = (-0.2, 0.5)
    tol_2d: float = 1e-8
    tol_3d: float = 1e-6


def main():
    d = CompareConfig()
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ns", default=",".join(map(str, d.ns)))
    ap.add_argument("--xis", default=",".join(map(str, d.xis)))
    a = ap.parse_args()
    cfg = CompareConfig(tuple(int(v) for v in a.ns.split(",")), tuple(float(v) for v in a.xis.split(",")))
    print(f"{'n':>4} {'xi0':>6} {'log C (2D)':>16} {'log C (3D)':>16} {'rel':>9}")
    for n in cfg.ns:
        for xi0 in cfg.xis:
            s = gev_sample(GevParams(1, 0, xi0), n, seed=n)
            a2 = log_Cn(s, flat(), cfg.tol_2d).log_Cn
            a3 = log_Cn_full3d(s, flat(), cfg.tol_3d).log_Cn
            print(f"{n:4d} {xi0:6.2f} {a2:16.10f} {a3:16.10f} {abs(a2 - a3) / abs(a2):9.1e}")


if __name__ == "__main__":
    main()
