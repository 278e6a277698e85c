"""Driver-level checks: argument handling, CSV/sidecar output, and the
small end-to-end study paths."""

import csv
import json
import math
import subprocess
import sys

import numpy as np
import pytest

from hpgalerkin.cli import (BENCH_COLUMNS, STUDY_COLUMNS, THERMOFORM_COLUMNS,
                            ProblemSpec, bench_preconditioner, build_parser,
                            ls_rate, main, make_reference, run_study,
                            run_thermoform)


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


class TestParser:
    def test_study_defaults(self):
        args = build_parser().parse_args(
            ["study", "--problem", "obstacle1d-oscillatory", "--out", "x.csv"])
        assert args.strategy == "h-uniform"
        assert args.p is None and args.cells is None
        assert args.seed == 0

    def test_bench_defaults(self):
        args = build_parser().parse_args(
            ["bench-precond", "--out", "x.csv"])
        assert args.problem == "obstacle1d"
        assert args.p == [4, 8, 16]
        assert args.cells == [10]
        assert args.rtol == 1e-6

    def test_thermoform_degree_list(self):
        args = build_parser().parse_args(
            ["thermoform", "--p", "6,12", "--out", "x.csv"])
        assert args.p == [6, 12]
        assert args.cells == 4

    def test_out_is_required(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(
                ["study", "--problem", "obstacle1d-oscillatory"])

    def test_unknown_problem_rejected(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(
                ["study", "--problem", "heat-equation", "--out", "x.csv"])


class TestSpec:
    def test_validate_rejects_unknown_strategy(self):
        with pytest.raises(ValueError):
            ProblemSpec(problem="obstacle1d-oscillatory",
                        strategy="r-adaptive").validate()

    def test_adaptive_only_on_the_1d_problem(self):
        with pytest.raises(ValueError):
            ProblemSpec(problem="gradient2d",
                        strategy="hp-adaptive").validate()

    def test_config_file_merges_under_flags(self, tmp_path):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"problem": "obstacle1d-oscillatory",
                                   "cells": 30, "rtol": 1e-4}))
        args = build_parser().parse_args(
            ["study", "--problem", "obstacle1d-oscillatory", "--cells", "10",
             "--config", str(cfg), "--out", "x.csv"])
        from hpgalerkin.cli import _spec_from_args
        spec = _spec_from_args(args)
        assert spec.cells == 10          # flag wins
        assert spec.rtol == 1e-4         # config fills the gap


def test_ls_rate_recovers_power_law():
    dofs = [10, 20, 40, 80]
    errs = [d ** -2.0 for d in dofs]
    assert ls_rate(dofs, errs) == pytest.approx(2.0, abs=1e-12)
    assert math.isnan(ls_rate([10], [1.0]))


@pytest.fixture(scope="module")
def study_csv(tmp_path_factory):
    out = tmp_path_factory.mktemp("study") / "s.csv"
    rc = main(["study", "--problem", "obstacle1d-oscillatory", "--p", "2",
               "--cells", "10", "--steps", "2", "--out", str(out)])
    assert rc == 0
    return out


def test_study_writes_schema_and_rows(study_csv):
    rows = read_csv(study_csv)
    assert list(rows[0].keys()) == list(STUDY_COLUMNS)
    assert len(rows) == 2
    assert all(r["status"] == "ok" for r in rows)
    assert int(rows[1]["dofs"]) > int(rows[0]["dofs"])
    assert float(rows[1]["H1_error"]) < float(rows[0]["H1_error"])


def test_study_sidecar_traces_run(study_csv):
    side = json.loads(study_csv.with_suffix(".json").read_text())
    assert side["spec"]["problem"] == "obstacle1d-oscillatory"
    assert side["spec"]["cells"] == 10
    assert len(side["rows"]) == 2
    assert side["summary"]["rate"] > 0.0
    # spec + rows + summary make the CSV reproducible
    assert side["rows"][0]["status"] == "ok"


def test_study_rerun_is_deterministic(study_csv, tmp_path):
    out = tmp_path / "again.csv"
    rc = main(["study", "--problem", "obstacle1d-oscillatory", "--p", "2",
               "--cells", "10", "--steps", "2", "--out", str(out)])
    assert rc == 0
    first, again = read_csv(study_csv), read_csv(out)
    skip = {"t_assembly_s", "t_linsolve_avg_s", "t_total_s"}
    for a, b in zip(first, again):
        for c in STUDY_COLUMNS:
            if c not in skip:
                assert a[c] == b[c]


def test_bench_precond_writes_table(tmp_path):
    out = tmp_path / "bench.csv"
    rows = bench_preconditioner("obstacle1d", [2, 4], [8], out=str(out))
    got = read_csv(out)
    assert list(got[0].keys()) == list(BENCH_COLUMNS)
    assert len(got) == 2
    for r in rows:
        assert r["converged"]
        assert 0 < r["iterations"] < 400


def test_reference_roundtrip(tmp_path):
    ref = tmp_path / "ref.npz"
    spec = ProblemSpec(problem="obstacle2d-bessel", cells=4, p=3, rtol=1e-8)
    trust = make_reference(spec, str(ref))
    assert math.isfinite(trust)
    assert float(np.load(ref)["trust"]) == pytest.approx(trust)
    out = tmp_path / "s2.csv"
    rc = main(["study", "--problem", "obstacle2d-bessel", "--strategy",
               "p-uniform", "--cells", "4", "--p", "2", "--steps", "2",
               "--ref", str(ref), "--out", str(out)])
    assert rc == 0
    rows = read_csv(out)
    errs = [float(r["H1_error"]) for r in rows]
    assert all(math.isfinite(e) for e in errs)
    assert errs[1] < errs[0]


def test_study_without_ref_reports_nan_errors(tmp_path):
    out = tmp_path / "noref.csv"
    rc = main(["study", "--problem", "obstacle2d-bessel", "--strategy",
               "p-uniform", "--cells", "4", "--p", "2", "--steps", "1",
               "--out", str(out)])
    assert rc == 0
    rows = read_csv(out)
    assert math.isnan(float(rows[0]["H1_error"]))
    assert rows[0]["status"] == "ok"
    side = json.loads(out.with_suffix(".json").read_text())
    # non-finite floats are nulled so the sidecar stays strict JSON
    assert side["rows"][0]["H1_error"] is None


def test_thermoform_rows(tmp_path):
    out = tmp_path / "tf.csv"
    rows = run_thermoform([4], 4, str(out))
    got = read_csv(out)
    assert list(got[0].keys()) == list(THERMOFORM_COLUMNS)
    assert rows[0]["status"] == "ok"
    assert rows[0]["fixed_point"] == 4
    assert rows[0]["avg_newton_step1"] > 0


def test_run_study_rejects_thermoforming():
    with pytest.raises(ValueError):
        run_study(ProblemSpec(problem="thermoforming"), "x.csv")


def test_console_script_runs(tmp_path):
    out = tmp_path / "cli.csv"
    proc = subprocess.run(
        [sys.executable, "-m", "hpgalerkin.cli", "study", "--problem",
         "obstacle1d-oscillatory", "--p", "2", "--cells", "10", "--steps",
         "1", "--out", str(out)],
        capture_output=True, text=True)
    assert proc.returncode == 0
    assert "1 levels" in proc.stdout
    assert out.exists()
