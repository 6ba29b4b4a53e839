import json
import math
import subprocess
import sys

import numpy as np
import pytest

from gevpost import __version__, cli
from gevpost.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, RunConfig, UsageError, load_sample, run
from gevpost.gev_core import GevParams, gev_sample


def _lines(path):
    return [json.loads(x) for x in open(path).read().splitlines()]


def test_save_load_roundtrip(tmp_path):
    s = gev_sample(GevParams(1.3, -0.2, 0.4), 10_000, seed=0)
    p = tmp_path / "x.txt"
    cli.save_sample(s.values, p, header="demo")
    assert np.array_equal(load_sample(p).values, s.values)


@pytest.mark.parametrize("text", ["", "value\n", "# only a comment\n\n"])
def test_load_no_observations(tmp_path, text):
    p = tmp_path / "e.txt"
    p.write_text(text)
    with pytest.raises(ValueError, match="no observations"):
        load_sample(p)


def test_load_reports_line_numbers(tmp_path):
    p = tmp_path / "bad.txt"
    p.write_text("y\n1.0\n2.5\nabc\n")
    with pytest.raises(ValueError, match=r":4: not a number"):
        load_sample(p)
    p.write_text("1.0\nnan\n")
    with pytest.raises(ValueError, match=r":2: non-finite"):
        load_sample(p)


def test_load_header_and_comments(tmp_path):
    p = tmp_path / "ok.txt"
    p.write_text("annual_max\n1.5  # first\n\n# skipped\n2.5\n0.5\n")
    assert np.array_equal(load_sample(p).values, [0.5, 1.5, 2.5])


def test_config_rejects_unknown_keys():
    with pytest.raises(UsageError, match="tolerance"):
        RunConfig.from_dict({"command": "fit", "tolerance": 1e-3})
    cfg = RunConfig.from_dict({"command": "fit", "n": [10, 20], "seeds": [1]})
    assert cfg.n == (10, 20) and cfg.echo()["n"] == [10, 20]


@pytest.mark.parametrize("kw", [{"command": "nope"}, {"command": "fit", "theta0": (1, 0)},
                                {"command": "fit", "theta0": (-1, 0, 0.1)},
                                {"command": "fit", "tol": 0.0}, {"command": "fit", "seeds": ()},
                                {"command": "fit", "prior": "nope"},
                                {"command": "mcmc", "n_iter": 10, "burn_in": 10}])
def test_config_validation(kw):
    with pytest.raises(UsageError):
        RunConfig(**kw)


def test_fit_on_file_reports_score_identity(tmp_path, capsys):
    data = tmp_path / "d.txt"
    cli.save_sample(gev_sample(GevParams(1, 0, 0.3), 500, seed=4).values, data)
    out = tmp_path / "fit.jsonl"
    assert run(["fit", "--data", str(data), "--out", str(out)]) == EXIT_OK
    err = capsys.readouterr().err
    assert "sum w^(-1/xi) = " in err
    rec = _lines(out)[0]
    assert rec["n"] == 500 and rec["converged"]
    assert rec["score_identity_rel_err"] < 1e-6
    assert rec["schema"] == cli.SCHEMA and rec["version"] == __version__
    assert rec["config"]["data"] == str(data)


def test_simulate_then_fit(tmp_path):
    d = tmp_path / "sim"
    assert run(["simulate", "--theta0", "1,0,0.2", "--n", "50", "--seeds", "0,1",
                "--out", str(d)]) == EXIT_OK
    files = sorted(p.name for p in d.iterdir())
    assert files == ["sample_n50_seed0.txt", "sample_n50_seed1.txt"]
    s = load_sample(d / files[0])
    assert np.array_equal(s.values, gev_sample(GevParams(1, 0, 0.2), 50, seed=0).values)


def test_simulate_to_stdout(capsys):
    assert run(["simulate", "--theta0", "1,0,0.2", "--n", "5", "--seeds", "3"]) == EXIT_OK
    rec = json.loads(capsys.readouterr().out)
    assert rec["values"] == gev_sample(GevParams(1, 0, 0.2), 5, seed=3).values.tolist()


def test_evidence_command(tmp_path):
    out = tmp_path / "ev.jsonl"
    assert run(["evidence", "--n", "500", "--theta0", "1,0,0.5", "--out", str(out)]) == EXIT_OK
    rec = _lines(out)[0]
    assert rec["log_Cn"] >= rec["log_Bn"]
    assert rec["log_ratio"] == pytest.approx(rec["log_Cn"] - rec["log_Bn"])


def test_regions_command(tmp_path):
    out = tmp_path / "rg.jsonl"
    assert run(["regions", "--n", "200", "--theta0", "1,0,0.5", "--tol", "1e-5",
                "--out", str(out)]) == EXIT_OK
    rec = _lines(out)[0]
    assert len(rec["log_masses"]) == 5 and 0 <= rec["shell_fraction"] < 1


def test_mcmc_command(tmp_path):
    out = tmp_path / "mc.jsonl"
    assert run(["mcmc", "--n", "100", "--theta0", "1,0,0.2", "--n-iter", "4000",
                "--burn-in", "1000", "--out", str(out)]) == EXIT_OK
    rec = _lines(out)[0]
    assert rec["boxes"] == 27 and len(rec["box_deviations"]) == 27


def test_study_command_and_env_dir(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "outdir"))
    assert run(["study", "--n", "40,80", "--seeds", "0:2", "--theta0", "1,0,0.5",
                "--tol", "1e-5"]) == EXIT_OK
    lines = _lines(tmp_path / "outdir" / "study.jsonl")
    assert [ln["kind"] for ln in lines] == ["record"] * 4 + ["summary"]
    assert lines[-1]["summary"]["n_failed"] == 0


def test_checkfun_command(tmp_path):
    out = tmp_path / "cf.jsonl"
    assert run(["checkfun", "--cases", "5", "--seeds", "1", "--out", str(out)]) == EXIT_OK
    recs = _lines(out)
    assert [r["check"] for r in recs] == ["carlson", "incomplete_gamma", "approx_beta",
                                          "gp_moments", "spacing"]
    assert all(r["cases"] == 5 for r in recs)


def test_config_file_and_flag_override(tmp_path):
    cfgp = tmp_path / "c.json"
    cfgp.write_text(json.dumps({"theta0": [1, 0, 0.3], "n": [60], "seeds": [2]}))
    out = tmp_path / "f.jsonl"
    assert run(["fit", "--config", str(cfgp), "--n", "70", "--out", str(out)]) == EXIT_OK
    rec = _lines(out)[0]
    assert rec["n"] == 70 and rec["seed"] == 2
    cfgp.write_text(json.dumps({"theta": [1, 0, 0.3]}))
    assert run(["fit", "--config", str(cfgp)]) == EXIT_USAGE


def test_usage_errors(tmp_path, capsys):
    assert run([]) == EXIT_USAGE
    assert run(["fly"]) == EXIT_USAGE
    assert run(["fit", "--theta0", "1,2"]) == EXIT_USAGE
    assert run(["fit", "--data", str(tmp_path / "missing.txt")]) == EXIT_USAGE
    bad = tmp_path / "bad.txt"
    bad.write_text("1\n2\nx\n")
    assert run(["fit", "--data", str(bad)]) == EXIT_USAGE
    assert ":3:" in capsys.readouterr().err
    assert run(["--version"]) == EXIT_OK


def test_numeric_failure_exit(tmp_path):
    # a constant sample admits no fit; the record is flagged and the exit is 3
    data = tmp_path / "c.txt"
    data.write_text("1\n1\n1\n1\n")
    out = tmp_path / "f.jsonl"
    assert run(["fit", "--data", str(data), "--out", str(out)]) == EXIT_NUMERIC
    assert _lines(out)[0]["status"].startswith("error")


def test_repeat_runs_byte_identical(tmp_path):
    # the output path is part of the echoed config, so both runs write to it
    out = tmp_path / "ev.jsonl"
    args = ["evidence", "--n", "80,120", "--seeds", "3,4", "--theta0", "1,0,0.4", "--tol", "1e-5",
            "--out", str(out)]
    assert run(args) == EXIT_OK
    first = out.read_bytes()
    assert run(args) == EXIT_OK
    assert out.read_bytes() == first


def test_jobs_do_not_change_output(tmp_path):
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    args = ["fit", "--n", "100,200", "--seeds", "0:2", "--theta0", "1,0,0.2"]
    assert run(args + ["--out", str(a)]) == EXIT_OK
    assert run(args + ["--jobs", "2", "--out", str(b)]) == EXIT_OK
    ra, rb = _lines(a), _lines(b)
    for x, y in zip(ra, rb):
        x.pop("config"), y.pop("config")
    assert ra == rb


def test_console_entry_point(tmp_path):
    out = tmp_path / "f.jsonl"
    proc = subprocess.run([sys.executable, "-m", "gevpost.cli", "fit", "--n", "50", "--theta0",
                           "1,0,0.2", "--out", str(out)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert math.isfinite(_lines(out)[0]["log_lik"])
