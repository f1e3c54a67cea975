#!/usr/bin/env python3
"""
Command tests for solve and generate: exit codes, outputs and files.
"""
import json
import sys
from pathlib import Path

import pytest

# Add project paths
project_root = Path(__file__).parent.parent
sys.path.insert(0, str(project_root))
sys.path.insert(0, str(project_root / "src"))

import run as run_module
from instance_io import read_instance
from results_store import load_reports
from run import generate, parse_grid_size, run
from solve_report import SolveReport, parse_key_value

SMALL = ["--gen", "grid", "4x3", "--labels", "4", "--seed", "7"]

POTTS_3 = """\
mrf 2 1 3
unary 0 0 1 2
unary 1 2 1 0
edge 0 1 table 0 1 1 1 0 1 1 1 0
"""


def strip_time(text: str) -> str:
    return "\n".join(line for line in text.splitlines() if not line.startswith("wall_time_ms="))


@pytest.fixture(autouse=True)
def no_env_overrides(monkeypatch):
    for var in ("MEMFLOW_DEFAULT_SOLVER", "MEMFLOW_BRUTE_FORCE_CAP", "MEMFLOW_SAMPLE_EVERY", "MEMFLOW_LOG_LEVEL"):
        monkeypatch.delenv(var, raising=False)


def test_parse_grid_size():
    assert parse_grid_size("16x8") == (16, 8)
    assert parse_grid_size("3X2") == (3, 2)
    for bad in ("16", "axb", "0x4", "4x3x2"):
        with pytest.raises(ValueError):
            parse_grid_size(bad)


@pytest.mark.parametrize("solver", ["reference", "poly", "block"])
def test_solve_prints_a_report(solver, capsys):
    assert run(SMALL + ["--solver", solver]) == 0
    out = capsys.readouterr().out
    values = parse_key_value(out)
    assert values["solver"] == solver
    assert int(values["energy"]) == int(values["flow_total"]) + int(values["constant"])
    assert out.splitlines()[-1].startswith("wall_time_ms=")


def test_solvers_print_the_same_energy(capsys):
    energies = set()
    for solver in ("bruteforce", "reference", "poly", "block"):
        assert run(["--gen", "grid", "3x2", "--labels", "3", "--solver", solver]) == 0
        energies.add(parse_key_value(capsys.readouterr().out)["energy"])
    assert len(energies) == 1


def test_verify_runs_every_solver(capsys):
    assert run(["--gen", "grid", "3x2", "--labels", "3", "--reg", "huber", "--solver", "block", "--verify"]) == 0
    assert parse_key_value(capsys.readouterr().out)["solver"] == "block"


def test_verify_reports_disagreement(monkeypatch, capsys):
    def wrong(model, **_):
        return SolveReport(solver="poly", energy=10 ** 6, flow_total=10 ** 6, constant=0)

    monkeypatch.setitem(run_module.SOLVERS, "poly", wrong)
    assert run(SMALL + ["--solver", "block", "--verify"]) == 2
    err = capsys.readouterr().err
    assert "disagree" in err
    assert "poly: 1000000" in err


def test_unknown_solver_fails(capsys):
    assert run(SMALL + ["--solver", "simplex"]) == 1
    assert "unknown solver" in capsys.readouterr().err


def test_brute_force_over_the_cap_fails(capsys):
    assert run(["--gen", "grid", "5x4", "--labels", "3", "--solver", "bruteforce"]) == 1
    assert "cap" in capsys.readouterr().err


def test_bad_generator_arguments_fail():
    assert run(["--gen", "maze", "4x3"]) == 1
    assert run(["--gen", "grid", "4by3"]) == 1
    assert run(SMALL + ["--reg", "cubic"]) == 1


def test_non_submodular_input_fails(tmp_path, capsys):
    path = tmp_path / "potts.mrf"
    path.write_text(POTTS_3)
    assert run(["--input", str(path), "--solver", "poly"]) == 1
    assert "not submodular" in capsys.readouterr().err
    assert run(["--input", str(path), "--solver", "bruteforce"]) == 1


def test_syntax_error_names_the_line(tmp_path, capsys):
    path = tmp_path / "broken.mrf"
    path.write_text("mrf 1 0 2\nunary 0 1\n")
    assert run(["--input", str(path)]) == 1
    assert "line 2" in capsys.readouterr().err


def test_report_out_matches_stdout(tmp_path, capsys):
    path = tmp_path / "report.txt"
    assert run(SMALL + ["--solver", "poly", "--report-out", str(path)]) == 0
    assert path.read_text() == capsys.readouterr().out


def test_reports_are_deterministic_without_time(capsys):
    outputs = []
    for _ in range(2):
        assert run(SMALL + ["--solver", "block"]) == 0
        outputs.append(strip_time(capsys.readouterr().out))
    assert outputs[0] == outputs[1]


def test_diagnostics_lines(capsys):
    assert run(SMALL + ["--solver", "poly", "--diagnostics"]) == 0
    values = parse_key_value(capsys.readouterr().out)
    assert values["diag_existence_mismatches"] == "0"
    assert values["diag_distance_violations"] == "0"
    assert values["diag_column_mismatches"] == "0"


def test_labeling_out(tmp_path, capsys):
    image = tmp_path / "labels.pgm"
    assert run(SMALL + ["--solver", "block", "--labeling-out", str(image)]) == 0
    assert image.read_bytes().startswith(b"P5")

    instance = tmp_path / "pair.mrf"
    instance.write_text("mrf 2 1 2\nunary 0 0 3\nunary 1 2 0\nedge 0 1 fn 2 linear\n")
    assert run(["--input", str(instance), "--solver", "poly", "--labeling-out", str(tmp_path / "x.pgm")]) == 1
    assert "grid" in capsys.readouterr().err


def test_db_stores_the_report(tmp_path):
    db = tmp_path / "results.db"
    assert run(SMALL + ["--solver", "poly", "--db", str(db)]) == 0
    reports = load_reports(str(db))
    assert len(reports) == 1
    assert reports[0]["solver"] == "poly"
    assert reports[0]["num_vertices"] == 12


def test_config_file_sets_defaults(tmp_path, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"solver": {"default_solver": "poly"},
                                  "grid": {"width": 3, "height": 2, "labels": 3}}))
    assert run(["--config", str(config)]) == 0
    values = parse_key_value(capsys.readouterr().out)
    assert values["solver"] == "poly"

    config.write_text("{not json")
    assert run(["--config", str(config)]) == 1
    config.write_text(json.dumps({"grid": {"labels": 1}}))
    assert run(["--config", str(config)]) == 1


def test_environment_overrides_config(tmp_path, monkeypatch, capsys):
    config = tmp_path / "config.json"
    config.write_text(json.dumps({"grid": {"width": 2, "height": 2, "labels": 3}}))
    monkeypatch.setenv("MEMFLOW_DEFAULT_SOLVER", "reference")
    assert run(["--config", str(config)]) == 0
    assert parse_key_value(capsys.readouterr().out)["solver"] == "reference"


@pytest.mark.parametrize("var", ["MEMFLOW_BRUTE_FORCE_CAP", "MEMFLOW_SAMPLE_EVERY"])
def test_non_numeric_environment_value_fails(var, monkeypatch, capsys):
    monkeypatch.setenv(var, "lots")
    assert run(SMALL) == 1
    err = capsys.readouterr().err
    assert var in err
    assert "Traceback" not in err


def test_scale_is_rejected_for_generated_instances(tmp_path, capsys):
    assert run(SMALL + ["--scale", "2"]) == 1
    assert "--scale" in capsys.readouterr().err

    path = tmp_path / "pair.mrf"
    assert generate(["--gen", "grid", "2x1", "--labels", "3", "--out", str(path)]) == 0
    assert run(["--input", str(path), "--scale", "2", "--solver", "reference"]) == 0


def test_generate_writes_a_solvable_instance(tmp_path, capsys):
    path = tmp_path / "inst.mrf"
    assert generate(["--gen", "inpaint", "5x4", "--labels", "4", "--seed", "2", "--out", str(path)]) == 0
    model = read_instance(path)
    assert model.num_vertices == 20
    assert model.grid_shape == (5, 4)
    capsys.readouterr()
    assert run(["--input", str(path), "--solver", "block", "--verify"]) == 0


def test_generate_to_stdout(capsys):
    assert generate(["--gen", "grid", "2x2", "--labels", "3"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("# grid 2x2\nmrf 4 4 3\n")
    assert generate(["--input", "whatever.mrf"]) == 1
