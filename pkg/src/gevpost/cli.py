"""Command-line front end: simulate, fit, evidence, regions, mcmc, study, checkfun.

Every output line is a JSON object carrying the schema tag, the tool version
and the full run configuration, so a result file is enough to reproduce
itself.  Nothing time- or host-dependent is written, which makes repeated
runs byte-identical.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy import stats

from . import __version__
from .diagnostics import McmcConfig, axis_boxes, bvm_check, cn_bn_study
from .estimation import fit as mle_fit, observed_info
from .evidence import log_Cn, region_masses, region_radii
from .gev_core import GevParams, Sample, gev_sample, rng_from_seed
from .likelihood import log_w_terms
from .posterior_normal import log_Bn
from .priors import parse_prior
from .specfun import (
    beta_bound_check,
    carlson_bound_check,
    gp_moment,
    incomplete_gamma_bound_check,
    spacing_bound_check,
)

SCHEMA = "gevpost.cli/1"
OUT_ENV = "GEVPOST_OUT_DIR"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
COMMANDS = ("simulate", "fit", "evidence", "regions", "mcmc", "study", "checkfun")


class UsageError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    command: str
    theta0: tuple | None = (1.0, 0.0, 0.5)
    data: str | None = None
    prior: str = "flat"
    n: tuple = (200,)
    seeds: tuple = (0,)
    tol: float = 1e-6
    out: str | None = None
    jobs: int = 1
    n_iter: int = 220_000
    burn_in: int = 20_000
    radius: float = 0.2
    cases: int = 100

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}")
        if self.theta0 is not None:
            if len(self.theta0) != 3:
                raise UsageError("theta0 needs three values tau,mu,xi")
            try:
                GevParams(*self.theta0)
            except ValueError as exc:
                raise UsageError(f"invalid theta0: {exc}") from exc
        if not self.n or any(int(v) < 1 for v in self.n):
            raise UsageError("n must list positive integers")
        if not self.seeds:
            raise UsageError("at least one seed is needed")
        if not self.tol > 0:
            raise UsageError("tol must be positive")
        if self.jobs < 1:
            raise UsageError("jobs must be at least 1")
        if not self.n_iter > self.burn_in >= 0:
            raise UsageError("need n_iter > burn_in >= 0")
        try:
            parse_prior(self.prior)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc

    def echo(self) -> dict:
        d = asdict(self)
        d["theta0"] = list(self.theta0) if self.theta0 is not None else None
        d["n"], d["seeds"] = list(self.n), list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(unknown)}")
        d = dict(d)
        for key in ("theta0", "n", "seeds"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


# -- data files -------------------------------------------------------------------


def load_sample(path) -> Sample:
    """One observation per line; '#' comments, blank lines and one leading header allowed."""
    vals = []
    seen_data = False
    header_used = False
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            try:
                v = float(line)
            except ValueError:
                if not seen_data and not header_used:
                    header_used = True
                    continue
                raise ValueError(f"{path}:{lineno}: not a number: {line!r}") from None
            if not math.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value {line!r}")
            vals.append(v)
            seen_data = True
    if not vals:
        raise ValueError("no observations")
    return Sample(vals)


def save_sample(values, path, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        for v in np.asarray(values, dtype=float):
            fh.write(f"{v:.17g}\n")


def save_report(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")


# -- per-cell work ----------------------------------------------------------------


def _sample_for(cfg: RunConfig, n: int, seed: int) -> Sample:
    if cfg.data is not None:
        return load_sample(cfg.data)
    return gev_sample(GevParams(*cfg.theta0), n, seed=seed)


def _cells(cfg: RunConfig):
    if cfg.data is not None:
        return [(None, cfg.seeds[0])]
    return [(int(n), int(s)) for n in cfg.n for s in cfg.seeds]


def _fit_record(s: Sample) -> dict:
    f = mle_fit(s)
    th = f.theta_hat
    _, q = log_w_terms(th, s.values)
    score_sum = float(math.fsum(np.exp(-q)))
    return {
        "theta_hat": [th.tau, th.mu, th.xi],
        "log_lik": f.log_lik_at_max,
        "converged": f.converged,
        "iterations": f.iterations,
        "grad_norm": f.grad_norm,
        "obs_info": f.obs_info.tolist(),
        "sum_w_pow": score_sum,
        "score_identity_rel_err": abs(score_sum - s.n) / s.n,
        "c1_stat": observed_info(f).c1_stat if f.hessian_negdef else None,
    }, f


def _run_cell(args) -> dict:
    cfg, n, seed = args
    rec = {"n": n, "seed": seed, "status": "ok"}
    try:
        s = _sample_for(cfg, n, seed)
        rec["n"] = s.n
        pr = parse_prior(cfg.prior)
        if cfg.command == "fit":
            body, _ = _fit_record(s)
            rec.update(body)
        elif cfg.command == "evidence":
            body, f = _fit_record(s)
            lb = log_Bn(f, pr)
            ev = log_Cn(s, pr, cfg.tol, fit=f)
            rec.update(theta_hat=body["theta_hat"], log_Bn=lb, log_Cn=ev.log_Cn,
                       log_Cn_err=ev.abs_err_log, log_ratio=ev.log_Cn - lb,
                       evidence_converged=ev.converged)
        elif cfg.command == "regions":
            body, f = _fit_record(s)
            rr = region_radii(f.theta_hat, r=cfg.radius)
            rm = region_masses(s, pr, rr, f, cfg.tol)
            rec.update(theta_hat=body["theta_hat"], radii=[rr.r, rr.r1, rr.r2, rr.r3],
                       log_tau_cut=rr.log_tau_cut, log_masses=list(rm.log_masses),
                       ball_log_mass=rm.ball_log_mass, log_Cn=rm.log_Cn,
                       log_fractions=rm.log_fractions().tolist(),
                       shell_fraction=rm.shell_fraction, abs_err_log=list(rm.abs_err_log))
        elif cfg.command == "mcmc":
            body, f = _fit_record(s)
            r = bvm_check(s, pr, McmcConfig(cfg.n_iter, cfg.burn_in, seed), fit=f)
            rec.update(theta_hat=body["theta_hat"], max_box_deviation=r.max_box_deviation,
                       box_deviations=r.box_deviations.tolist(), box_se=r.box_se.tolist(),
                       interval_deviations=r.interval_deviations.tolist(),
                       ks=r.ks.tolist(), ess=r.ess.tolist(),
                       acceptance_rate=r.acceptance_rate, boxes=len(axis_boxes()))
    except (ValueError, ArithmeticError, np.linalg.LinAlgError) as exc:
        rec["status"] = f"error: {type(exc).__name__}: {exc}"
    return rec


# -- checkfun sweeps --------------------------------------------------------------


def _checkfun_records(cfg: RunConfig) -> list[dict]:
    rng = rng_from_seed(cfg.seeds[0])
    m = cfg.cases
    out = []

    def tally(name, results):
        held = sum(bool(r) for r in results)
        out.append({"check": name, "cases": len(results), "holds": held,
                    "all_hold": held == len(results), "status": "ok"})

    res = []
    while len(res) < m:
        k = int(rng.integers(2, 30))
        d = rng.uniform(0.05, 20.0, k)
        c = carlson_bound_check(d, float(rng.uniform(0.05, 5.0)))
        res.append(c.holds and c.converged)
    tally("carlson", res)

    res = []
    for _ in range(m):
        n = int(10 ** rng.uniform(2, 5))
        res.append(incomplete_gamma_bound_check(n, float(rng.choice([1.0, 2.0, 5.0]))).holds)
    tally("incomplete_gamma", res)

    res = []
    while len(res) < m:
        n = int(10 ** rng.uniform(3, 5))
        b = float(rng.uniform(0.3, 2.0))
        xi = b * float(rng.uniform(1.05, 3.0))
        try:
            res.append(beta_bound_check(n, b, xi).holds)
        except ValueError:
            continue  # outside the precondition; draw again
    tally("approx_beta", res)

    res = []
    for _ in range(m):
        k = int(rng.integers(1, 4))
        kappa = float(rng.uniform(-0.5, 0.9 / k))
        while abs(kappa) < 0.01:
            # scipy's moment loses digits to cancellation near kappa = 0
            kappa = float(rng.uniform(-0.5, 0.9 / k))
        tau = float(rng.uniform(0.2, 5.0))
        ref = float(stats.genpareto(c=kappa, scale=tau).moment(k))
        res.append(abs(gp_moment(kappa, tau, k) - ref) <= 1e-8 * abs(ref))
    tally("gp_moments", res)

    res = []
    for _ in range(m):
        xi0 = float(rng.uniform(0.3, 2.0))
        n = int(10 ** rng.uniform(3, 4))
        th0 = GevParams(1.0, 0.0, xi0)
        s = gev_sample(th0, n, seed=int(rng.integers(2**31)))
        f = mle_fit(s)
        if not (f.converged and f.theta_hat.xi > 0):
            res.append(False)
            continue
        res.append(spacing_bound_check(s, f, th0).holds)
    tally("spacing", res)
    return out


# -- driver -----------------------------------------------------------------------


def _int_list(text: str) -> tuple:
    out = []
    for part in text.split(","):
        part = part.strip()
        if ":" in part:
            lo, hi = part.split(":", 1)
            out.extend(range(int(lo), int(hi)))
        elif part:
            out.append(int(float(part)))
    return tuple(out)


def _float_triple(text: str) -> tuple:
    vals = tuple(float(v) for v in text.split(","))
    if len(vals) != 3:
        raise argparse.ArgumentTypeError("expected tau,mu,xi")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="gevpost", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with RunConfig keys")
    common.add_argument("--theta0", type=_float_triple, help="tau,mu,xi")
    common.add_argument("--data", help="sample file, one observation per line")
    common.add_argument("--prior", help="name[:key=value,...]")
    common.add_argument("--n", type=_int_list, help="sample sizes, e.g. 100,300,1000")
    common.add_argument("--seeds", type=_int_list, help="seeds, e.g. 0:20 or 1,2,3")
    common.add_argument("--tol", type=float)
    common.add_argument("--out", help=f"output path (default: ${OUT_ENV}/<command>.jsonl or stdout)")
    common.add_argument("--jobs", type=int)
    common.add_argument("--n-iter", dest="n_iter", type=int)
    common.add_argument("--burn-in", dest="burn_in", type=int)
    common.add_argument("--radius", type=float)
    common.add_argument("--cases", type=int)
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sub.add_parser(name, parents=[common])
    return p


def _config_from_args(ns: argparse.Namespace) -> RunConfig:
    base = {}
    if ns.config:
        with open(ns.config) as fh:
            base = json.load(fh)
        if not isinstance(base, dict):
            raise UsageError("config file must hold a JSON object")
    base["command"] = ns.command
    for f in fields(RunConfig):
        v = getattr(ns, f.name, None)
        if f.name != "command" and v is not None:
            base[f.name] = v
    return RunConfig.from_dict(base)


def _out_path(cfg: RunConfig, suffix: str = ".jsonl"):
    if cfg.out:
        return cfg.out
    root = os.environ.get(OUT_ENV)
    if root:
        os.makedirs(root, exist_ok=True)
        return os.path.join(root, cfg.command + suffix)
    return None


def _emit(lines, path):
    text = "".join(json.dumps(obj, sort_keys=True) + "\n" for obj in lines)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def execute(cfg: RunConfig) -> int:
    head = {"schema": SCHEMA, "version": __version__, "config": cfg.echo()}
    status = EXIT_OK
    if cfg.command == "simulate":
        if cfg.theta0 is None:
            raise UsageError("simulate needs --theta0")
        target = _out_path(cfg, suffix="")
        records = []
        for n, seed in _cells(cfg):
            s = gev_sample(GevParams(*cfg.theta0), n, seed=seed)
            path = None
            if target is not None:
                os.makedirs(target, exist_ok=True)
                path = os.path.join(target, f"sample_n{n}_seed{seed}.txt")
                hdr = "gevpost {} theta0={} n={} seed={}".format(
                    __version__, ",".join(repr(v) for v in cfg.theta0), n, seed)
                save_sample(s.values, path, hdr)
            rec = {"n": n, "seed": seed, "status": "ok", "file": path}
            if path is None:
                rec["values"] = [float(f"{v:.17g}") for v in s.values]
            records.append(rec)
        _emit([{**head, **r} for r in records], None)
        return status
    if cfg.command == "study":
        if cfg.theta0 is None:
            raise UsageError("study needs --theta0")
        rep = cn_bn_study(GevParams(*cfg.theta0), parse_prior(cfg.prior), cfg.n, cfg.seeds,
                          cfg.tol, jobs=cfg.jobs)
        lines = [{**head, "kind": "record", **r} for r in rep.records]
        lines.append({**head, "kind": "summary", "summary": rep.summary})
        _emit(lines, _out_path(cfg))
        return EXIT_NUMERIC if rep.summary["n_failed"] else EXIT_OK
    if cfg.command == "checkfun":
        records = _checkfun_records(cfg)
        _emit([{**head, **r} for r in records], _out_path(cfg))
        return EXIT_OK
    if cfg.data is None and cfg.theta0 is None:
        raise UsageError(f"{cfg.command} needs --theta0 or --data")
    if cfg.data is not None:
        load_sample(cfg.data)  # fail early, as a usage error, on unreadable data
    cells = [(cfg, n, seed) for n, seed in _cells(cfg)]
    if cfg.jobs > 1 and len(cells) > 1:
        with ProcessPoolExecutor(cfg.jobs) as ex:
            records = list(ex.map(_run_cell, cells))
    else:
        records = [_run_cell(c) for c in cells]
    records.sort(key=lambda r: (r["n"], r["seed"]))
    if cfg.command == "fit":
        for r in records:
            if r["status"] == "ok":
                print(f"theta_hat = ({r['theta_hat'][0]:.10g}, {r['theta_hat'][1]:.10g}, "
                      f"{r['theta_hat'][2]:.10g})  sum w^(-1/xi) = {r['sum_w_pow']:.12g}  "
                      f"n = {r['n']}", file=sys.stderr)
    _emit([{**head, **r} for r in records], _out_path(cfg))
    if any(r["status"] != "ok" for r in records):
        status = EXIT_NUMERIC
    return status


def run(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        cfg = _config_from_args(ns)
        return execute(cfg)
    except (UsageError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"gevpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as exc:
        # malformed data files and similar input problems
        print(f"gevpost: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
