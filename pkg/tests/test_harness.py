"""Experiment harness and CLI: config parsing, batch runs, reports, exit codes.

Subprocess tests drive the installed entry point exactly as a user would;
everything else exercises the library surface in-process.
"""

import json
import math
import subprocess
import sys

import numpy as np
import pytest

from geonoise.harness import (CSV_COLUMNS, ExperimentConfig, ResultRow, _fmt,
                              compare_to_theory, config_template, parse_config,
                              rows_to_csv, run_experiment)


def _cli(args, cwd):
    return subprocess.run([sys.executable, "-m", "geonoise.cli", *args],
                          cwd=cwd, capture_output=True, text=True)


def _row(d, mechanism, mean, *, kref=1.0, lref=1.0):
    return ResultRow(d=d, n=64, eps=1.0, mechanism=mechanism, mean_error=mean,
                     std_error=0.1, vol_lb=1.0, gvol_lb=1.0, knorm_ref=kref,
                     laplace_ref=lref, wall_time=0.0, seed=0)


def test_parse_config_template_roundtrip():
    assert parse_config(config_template()) == ExperimentConfig()


def test_parse_config_values_comments_and_lists():
    cfg = parse_config(
        "# comment line\n"
        "\n"
        "dims = 2, 4   # trailing comment\n"
        "n=64\n"
        "eps = 0.5\n"
        "mechanisms = laplace\n"
    )
    assert cfg.dims == (2, 4)
    assert cfg.n == 64
    assert cfg.eps == 0.5
    assert cfg.mechanisms == ("laplace",)
    assert cfg.sampler == "grid-walk"  # untouched default


def test_parse_config_errors_carry_line_numbers():
    with pytest.raises(ValueError, match="line 1.*unknown key"):
        parse_config("mystery = 3\n")
    with pytest.raises(ValueError, match="line 2.*duplicate"):
        parse_config("n = 3\nn = 4\n")
    with pytest.raises(ValueError, match="line 1.*bad value"):
        parse_config("n = abc\n")
    with pytest.raises(ValueError, match="line 1.*key=value"):
        parse_config("just text\n")


def test_experiment_config_validation():
    bad = (
        {"trials": 0}, {"dims": ()}, {"n": 0}, {"dims": (4,), "n": 2},
        {"eps": 0.0}, {"delta": 1.0}, {"mechanisms": ("magic",)},
        {"mechanisms": ()}, {"sampler": "metropolis"}, {"seed": -1},
        {"dims": (0,)},
    )
    for kwargs in bad:
        with pytest.raises(ValueError):
            ExperimentConfig(**kwargs)


def test_run_experiment_small_grid():
    cfg = ExperimentConfig(dims=(1, 2), n=12, mechanisms=("laplace", "knorm"),
                           trials=200, seed=5, sampler="rejection")
    rows = run_experiment(cfg, bound_trials=4000, cov_samples=512, write=False)
    assert [(r.d, r.mechanism) for r in rows] == \
        [(1, "laplace"), (1, "knorm"), (2, "laplace"), (2, "knorm")]
    for r in rows:
        assert r.error == ""
        assert math.isfinite(r.mean_error) and r.mean_error > 0
        assert math.isfinite(r.std_error)
        assert r.vol_lb > 0
        # the generalized bound searches over projections including k = d
        assert r.gvol_lb >= 0.9 * r.vol_lb
        assert math.isfinite(r.knorm_ref) and math.isfinite(r.laplace_ref)


def test_csv_is_deterministic_and_omits_wall_time():
    cfg = ExperimentConfig(dims=(1,), n=6, mechanisms=("laplace",),
                           trials=100, seed=9, sampler="rejection")
    a = rows_to_csv(run_experiment(cfg, bound_trials=2000, cov_samples=256,
                                   write=False))
    b = rows_to_csv(run_experiment(cfg, bound_trials=2000, cov_samples=256,
                                   write=False))
    assert a == b
    header, row, trailer = a.split("\n")
    assert header == ",".join(CSV_COLUMNS)
    assert "wall_time" not in a
    assert trailer == ""
    assert len(row.split(",")) == len(CSV_COLUMNS)


def test_write_results_emits_csv_and_json_mirror(tmp_path):
    out = tmp_path / "results.csv"
    cfg = ExperimentConfig(dims=(1,), n=4, mechanisms=("laplace",), trials=50,
                           seed=3, sampler="rejection", output=str(out))
    rows = run_experiment(cfg, bound_trials=2000, cov_samples=256)
    assert out.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
    mirror = json.loads(out.with_suffix(".json").read_text())
    assert mirror["config"]["n"] == 4
    assert len(mirror["rows"]) == len(rows) == 1
    assert mirror["rows"][0]["wall_time"] > 0


def test_fmt_csv_fields():
    assert _fmt("a,b\nc") == "a;b c"
    assert _fmt(float("nan")) == ""
    assert _fmt(np.int64(3)) == "3"
    assert _fmt(0.1) == "0.1"
    assert _fmt(1.0 / 3.0) == "0.333333333"


def test_compare_to_theory_pass_and_failures():
    knorm = [_row(d, "knorm", m) for d, m in zip((2, 4, 8), (1.0, 1.2, 0.9))]
    laplace = [_row(d, "laplace", m) for d, m in zip((2, 4, 8), (1.0, 2.0, 3.0))]
    report = compare_to_theory(knorm + laplace)
    assert report["verdict"] == "PASS"
    entry = report["per_mechanism"]["knorm"]
    assert math.isclose(entry["spread_knorm_ref"], 1.2 / 0.9)
    assert report["per_mechanism"]["laplace"]["grows_with_d"]

    wild = [_row(d, "knorm", m) for d, m in zip((2, 4, 8), (1.0, 1.0, 3.0))]
    report = compare_to_theory(wild + laplace)
    assert report["verdict"] == "FAIL"
    assert any("spread" in note for note in report["notes"])

    flat = [_row(d, "laplace", 1.0) for d in (2, 4, 8)]
    report = compare_to_theory(knorm + flat)
    assert report["verdict"] == "FAIL"
    assert any("not increasing" in note for note in report["notes"])


def test_compare_to_theory_skips_nan_rows_and_needs_three_dims():
    rows = [_row(2, "knorm", 1.0), _row(4, "knorm", float("nan")),
            _row(8, "knorm", 1.1)]
    report = compare_to_theory(rows)
    assert any("finite" in note for note in report["notes"])
    assert set(report["per_mechanism"]["knorm"]["knorm_ref_ratio"]) == {2, 8}

    with pytest.raises(ValueError, match="3 values of d"):
        compare_to_theory([_row(2, "knorm", 1.0), _row(4, "knorm", 1.0)])


def test_cli_gen_bounds_pipeline(tmp_path):
    res = _cli(["gen", "--kind", "bernoulli", "--d", "2", "--n", "16",
                "--seed", "3", "--out", "w.txt"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "w.txt").read_text().splitlines()[0] == "2 16"

    res = _cli(["bounds", "--matrix", "w.txt", "--trials", "4000",
                "--cov-samples", "256", "--out", "rep.json"], tmp_path)
    assert res.returncode == 0, res.stderr
    rep = json.loads((tmp_path / "rep.json").read_text())
    assert set(rep) == {"vol_lb", "gvol_lb", "per_k", "volume_ci",
                        "alpha_assumption"}
    assert rep["vol_lb"] > 0

    res = _cli(["gen", "--kind", "hypercube", "--d", "3", "--out", "h.txt"],
               tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "h.txt").read_text().splitlines()[0] == "3 8"


def test_cli_lp(tmp_path):
    inst = {"databases": [[0.0], [1.0]], "answers": [[0.0], [1.0]]}
    (tmp_path / "inst.json").write_text(json.dumps(inst))
    res = _cli(["lp", "--instance", "inst.json", "--eps", "1.0"], tmp_path)
    assert res.returncode == 0, res.stderr
    report = json.loads(res.stdout)
    assert abs(report["optimal_error"] - 1.0 / (1.0 + math.e)) <= 1e-9
    assert report["databases"] == 2 and report["answers"] == 2

    res = _cli(["lp", "--instance", "missing.json"], tmp_path)
    assert res.returncode == 1


def test_cli_audit_pass_and_fail(tmp_path):
    _cli(["gen", "--d", "1", "--n", "1", "--out", "w1.txt"], tmp_path)
    res = _cli(["audit", "--mechanism", "laplace", "--matrix", "w1.txt",
                "--trials", "40000", "--seed", "4"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert json.loads(res.stdout)["verdict"] == "pass"

    # mechanism spends eps=2 but claims eps=1: the ratio test must catch it
    res = _cli(["audit", "--mechanism", "laplace", "--matrix", "w1.txt",
                "--eps", "2.0", "--claim-eps", "1.0", "--trials", "40000",
                "--seed", "4"], tmp_path)
    assert res.returncode == 3, res.stderr
    assert json.loads(res.stdout)["verdict"] == "fail"


def test_cli_run_happy_path(tmp_path):
    (tmp_path / "exp.cfg").write_text(
        "dims = 1,2\nn = 12\nmechanisms = laplace,knorm\ntrials = 150\n"
        "sampler = rejection\nseed = 2\noutput = out.csv\n"
    )
    res = _cli(["run", "--config", "exp.cfg"], tmp_path)
    assert res.returncode == 0, res.stderr
    assert (tmp_path / "out.csv").exists()
    assert (tmp_path / "out.json").exists()
    assert "wrote out.csv" in res.stdout


def test_cli_run_records_cell_failures(tmp_path):
    # d=12 exceeds the volume estimator's dimension cap, so the bounds half
    # of the cell fails while the mechanism half still runs
    (tmp_path / "exp.cfg").write_text(
        "dims = 12\nn = 24\nmechanisms = laplace\ntrials = 50\n"
        "sampler = rejection\nseed = 2\noutput = bad.csv\n"
    )
    res = _cli(["run", "--config", "exp.cfg"], tmp_path)
    assert res.returncode == 2, res.stderr
    assert "bounds:" in res.stdout
    assert (tmp_path / "bad.csv").exists()


def test_cli_run_template(tmp_path):
    res = _cli(["run", "--template"], tmp_path)
    assert res.returncode == 0
    assert parse_config(res.stdout) == ExperimentConfig()


def test_cli_validation_exit_codes(tmp_path):
    assert _cli(["frobnicate"], tmp_path).returncode == 1
    assert _cli(["gen", "--d", "2"], tmp_path).returncode == 1
    assert _cli(["run", "--config", "missing.cfg"], tmp_path).returncode == 1
    assert _cli(["audit", "--mechanism", "laplace",
                 "--matrix", "missing.txt"], tmp_path).returncode == 1
    assert _cli([], tmp_path).returncode == 1
