import json
import math
import sys
import types
from pathlib import Path

import pytest

from mottrw.cli import ConfigError, parse_lambda_grid, run

SIM = [
    "simulate", "--family", "renewal", "--rate", "2.0", "--bias", "0.5",
    "--steps", "2000", "--replicas", "4", "--seed", "7",
]


@pytest.fixture()
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    return tmp_path


# ---------------------------------------------------------------------------
# lambda grids
# ---------------------------------------------------------------------------


def test_lambda_grid_colon_is_inclusive():
    grid = parse_lambda_grid("0.1:0.9:0.1")
    assert grid == [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9]


def test_lambda_grid_single_point_and_comma_list():
    assert parse_lambda_grid("0.25:0.25:0.1") == [0.25]
    assert parse_lambda_grid("0.3,0.5, 0.7") == [0.3, 0.5, 0.7]


@pytest.mark.parametrize("text", ["0.5:0.1:0.1", "0.1:0.9:0", "a:b:c", "x,y", ""])
def test_lambda_grid_rejects_malformed(text):
    with pytest.raises(ConfigError):
        parse_lambda_grid(text)


# ---------------------------------------------------------------------------
# simulate: files, determinism, manifest round trip
# ---------------------------------------------------------------------------


def test_simulate_writes_three_files(workdir, capsys):
    assert run(SIM + ["--out", "run"]) == 0
    assert "v_hat" in capsys.readouterr().out
    lines = Path("run.jsonl").read_text().splitlines()
    assert len(lines) == 4 and all(json.loads(line)["record"] == "replica" for line in lines)
    header, row = Path("run.csv").read_text().splitlines()
    assert header == "steps,burn_in,replicas,units,v_hat,stderr"
    manifest = json.loads(Path("run.manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 7
    assert float(row.split(",")[4]) == manifest["summary"]["v_hat"]
    assert "numpy" in manifest["versions"] and "mottrw" in manifest["versions"]


def test_simulate_rerun_is_byte_identical(tmp_path, monkeypatch):
    for sub in ("a", "b"):
        d = tmp_path / sub
        d.mkdir()
        monkeypatch.chdir(d)
        assert run(SIM + ["--out", "run"]) == 0
    for suffix in ("run.jsonl", "run.csv", "run.manifest.json"):
        assert (tmp_path / "a" / suffix).read_bytes() == (tmp_path / "b" / suffix).read_bytes()


def test_thread_count_does_not_change_results(workdir):
    assert run(SIM + ["--out", "t1", "--threads", "1"]) == 0
    assert run(SIM + ["--out", "t3", "--threads", "3"]) == 0
    assert Path("t1.jsonl").read_bytes() == Path("t3.jsonl").read_bytes()
    assert Path("t1.csv").read_bytes() == Path("t3.csv").read_bytes()


def test_manifest_reruns_as_config(workdir):
    assert run(SIM + ["--out", "first"]) == 0
    assert run(["simulate", "--config", "first.manifest.json", "--out", "second"]) == 0
    assert Path("first.jsonl").read_bytes() == Path("second.jsonl").read_bytes()
    assert Path("first.csv").read_bytes() == Path("second.csv").read_bytes()
    c1 = json.loads(Path("first.manifest.json").read_text())["config"]
    c2 = json.loads(Path("second.manifest.json").read_text())["config"]
    assert (c1.pop("out"), c2.pop("out")) == ("first", "second")
    assert c1 == c2


def test_flags_override_config_file(workdir):
    Path("cfg.json").write_text(json.dumps({
        "environment": {"family": "renewal_iid", "params": {"d": 1.0, "rate": 2.0}},
        "walk": {"bias": 0.5},
        "steps": 1000,
        "replicas": 4,
    }))
    assert run(["simulate", "--config", "cfg.json", "--steps", "500",
                "--out", "nested/dir/run"]) == 0
    manifest = json.loads(Path("nested/dir/run.manifest.json").read_text())
    assert manifest["config"]["steps"] == 500
    assert manifest["outputs"] == {"jsonl": "run.jsonl", "csv": "run.csv"}


# ---------------------------------------------------------------------------
# sweep
# ---------------------------------------------------------------------------


def test_sweep_grid_gives_one_row_per_bias(workdir, capsys):
    assert run([
        "sweep", "--family", "heavy_tail", "--gamma", "1.5",
        "--lambda", "0.1:0.9:0.1", "--steps", "400", "--replicas", "2", "--seed", "3",
        "--out", "sw",
    ]) == 0
    assert "discontinuity flag" in capsys.readouterr().out
    lines = Path("sw.csv").read_text().splitlines()
    assert lines[0] == "family,params,lambda,rho,horizon,v_hat,stderr,analytic_class"
    assert len(lines) == 10
    classes = [line.rsplit(",", 1)[1] for line in lines[1:]]
    assert classes == ["subballistic"] * 4 + ["ballistic"] * 5
    summary = json.loads(Path("sw.manifest.json").read_text())["summary"]
    assert summary["boundary"] == 0.5
    assert isinstance(summary["discontinuity"], bool)


def test_sweep_multi_horizon_rows(workdir):
    assert run([
        "sweep", "--family", "lattice", "--lambda-grid", "0.3,0.6",
        "--horizons", "200,400", "--replicas", "2", "--out", "sw2",
    ]) == 0
    lines = Path("sw2.csv").read_text().splitlines()
    assert len(lines) == 5
    horizons = [int(line.split(",")[4]) for line in lines[1:]]
    assert horizons == [200, 400, 200, 400]


# ---------------------------------------------------------------------------
# conductance, regen, subballistic, evm column contracts
# ---------------------------------------------------------------------------


def test_conductance_rows_per_rho(workdir):
    assert run([
        "conductance", "--family", "renewal", "--rate", "2.0", "--bias", "0.5",
        "--levels", "4", "--environments", "3", "--rhos", "1,2,inf", "--out", "c",
    ]) == 0
    lines = Path("c.csv").read_text().splitlines()
    assert lines[0] == "rho,mean_c,min_c,max_c"
    assert len(lines) == 4 and lines[3].startswith("inf,")
    assert len(Path("c.jsonl").read_text().splitlines()) == 9
    assert json.loads(Path("c.manifest.json").read_text())["summary"]["monotone_in_rho"] is True


def test_regen_reports_escape_floor(workdir):
    assert run([
        "regen", "--family", "renewal", "--rate", "2.0", "--bias", "0.5",
        "--rho", "3", "--cycles", "50", "--out", "r",
    ]) == 0
    header, row = Path("r.csv").read_text().splitlines()
    assert header == "rho,epsilon,cycles,mean_cycle_steps,v_regen,stderr"
    cells = row.split(",")
    assert cells[0] == "3" and int(cells[2]) == 50
    assert float(cells[1]) == pytest.approx(0.19673467014368329, abs=1e-15)
    assert len(Path("r.jsonl").read_text().splitlines()) == 50


def test_subballistic_ballistic_case_says_no(workdir, capsys):
    assert run([
        "subballistic", "--family", "lattice", "--bias", "0.5",
        "--horizons", "500,2000", "--replicas", "3", "--out", "sb",
    ]) == 0
    assert "operational zero-speed: no" in capsys.readouterr().out
    lines = Path("sb.csv").read_text().splitlines()
    assert lines[0] == "horizon,v_hat,stderr" and len(lines) == 3
    assert json.loads(Path("sb.manifest.json").read_text())["summary"]["operational_zero"] is False


def test_evm_csv_columns(workdir):
    assert run([
        "evm", "--family", "renewal", "--rate", "2.0", "--bias", "0.5",
        "--rho", "3", "--steps", "8000", "--replicas", "16", "--out", "e",
    ]) == 0
    lines = Path("e.csv").read_text().splitlines()
    assert lines[0] == "k,ratio,structural_F,gamma_hat"
    assert len(lines) - 1 == len(Path("e.jsonl").read_text().splitlines()) > 0
    gammas = {line.rsplit(",", 1)[1] for line in lines[1:]}
    assert len(gammas) == 1


def test_evm_undersampled_run_is_an_argument_error(workdir, capsys):
    assert run([
        "evm", "--family", "renewal", "--rate", "2.0", "--bias", "0.5",
        "--rho", "3", "--steps", "1500", "--replicas", "4", "--out", "e2",
    ]) == 1
    err = capsys.readouterr().err
    assert err.startswith("mottrw: evm:") and "below the drift bound" in err
    assert not Path("e2.jsonl").exists()


# ---------------------------------------------------------------------------
# verify plumbing
# ---------------------------------------------------------------------------


def _criterion(number, passed):
    return types.SimpleNamespace(
        number=number, title=f"check {number}", passed=passed, seconds=0.01, detail="d"
    )


def test_verify_pass_and_fail_exit_codes(workdir, monkeypatch, capsys):
    seen = []
    mod = types.ModuleType("mottrw.acceptance")
    mod.run_suite = lambda suite, threads=None: seen.append(suite) or [
        _criterion(1, True), _criterion(2, True)
    ]
    monkeypatch.setitem(sys.modules, "mottrw.acceptance", mod)
    assert run(["verify", "--out", "v"]) == 0
    out = capsys.readouterr().out
    assert "[PASS]" in out and "2/2 criteria passed" in out
    assert seen == ["fast"]
    assert Path("v.csv").read_text().splitlines()[0] == "criterion,title,passed,seconds,detail"

    mod.run_suite = lambda suite, threads=None: [_criterion(1, True), _criterion(2, False)]
    assert run(["verify", "--suite", "full", "--out", "v2"]) == 2
    captured = capsys.readouterr()
    assert "[FAIL]" in captured.out and "FAILED criterion 2" in captured.err
    assert json.loads(Path("v2.manifest.json").read_text())["summary"]["failed"] == [2]


# ---------------------------------------------------------------------------
# rejected configs exit 1 with a field diagnostic
# ---------------------------------------------------------------------------

BAD_ARGS = [
    (["simulate", "--bias", "0.5"], "environment"),
    (["simulate", "--family", "renewal", "--rate", "2.0"], "walk.bias"),
    (["simulate", "--family", "weird", "--bias", "0.5"], "environment.family"),
    (["simulate", "--family", "renewal", "--rate", "2.0", "--bias", "1.5"], "walk.bias"),
    (["simulate", "--family", "heavy_tail", "--bias", "0.3"], "environment"),
    (["simulate", "--family", "lattice", "--bias", "0.5", "--rho", "maybe"], "integer"),
    (["sweep", "--family", "renewal", "--rate", "2.0"], "lambda_grid"),
    (["regen", "--family", "renewal", "--rate", "2.0", "--bias", "0.5"], "walk.rho"),
    (["evm", "--family", "renewal", "--rate", "2.0", "--bias", "0.5", "--rho", "inf"], "walk.rho"),
    (["subballistic", "--family", "lattice", "--bias", "0.5", "--horizons", "5000"], "at least two"),
    (["subballistic", "--family", "lattice", "--bias", "0.5", "--horizons", "a,b"], "horizons"),
]


@pytest.mark.parametrize("args,fragment", BAD_ARGS, ids=[" ".join(a) for a, _ in BAD_ARGS])
def test_bad_configs_exit_1(workdir, capsys, args, fragment):
    assert run(args + ["--out", "never"]) == 1
    err = capsys.readouterr().err
    assert err.startswith("mottrw:") and fragment in err
    assert not Path("never.jsonl").exists()


def test_unknown_config_field_is_rejected(workdir, capsys):
    Path("cfg.json").write_text(json.dumps({
        "environment": {"family": "constant_lattice", "params": {"d": 1.0}},
        "walk": {"bias": 0.5},
        "bogus": 1,
    }))
    assert run(["simulate", "--config", "cfg.json"]) == 1
    assert "bogus" in capsys.readouterr().err


def test_malformed_json_reports_line_and_column(workdir, capsys):
    Path("cfg.json").write_text("{ bad")
    assert run(["simulate", "--config", "cfg.json"]) == 1
    assert "line 1 column" in capsys.readouterr().err


def test_missing_config_file(workdir, capsys):
    assert run(["simulate", "--config", "nope.json"]) == 1
    assert "nope.json" in capsys.readouterr().err


def test_no_command_prints_help(capsys):
    assert run([]) == 1
    assert "usage" in capsys.readouterr().out
