import json

import pytest

from sdot2d.cli import EXIT_INVALID, EXIT_IO, EXIT_NOT_CONVERGED, EXIT_OK, main
from sdot2d.io import dump_json, problem_to_dict
from sdot2d.presets import get_preset, preset_names


def write_config(path, name="e1", **sections):
    doc = {"problem": problem_to_dict(get_preset(name).problem), **sections}
    path.write_text(dump_json(doc))
    return path


def test_preset_e1(tmp_path, capsys):
    assert main(["preset", "e1", "-o", str(tmp_path), "--svg"]) == EXIT_OK
    out = dict(line.split("\t", 1) for line in capsys.readouterr().out.splitlines())
    assert out["status"] == "converged"
    assert int(out["iterations"]) <= 3
    report = json.loads((tmp_path / "e1.report.json").read_text())
    assert report["iterations"] <= 3
    assert (tmp_path / "e1.tessellation.json").exists()
    assert (tmp_path / "e1.svg").read_text().startswith("<?xml")
    assert (tmp_path / "e1.png").stat().st_size > 0


def test_preset_list(capsys):
    assert main(["preset", "list"]) == EXIT_OK
    assert capsys.readouterr().out.split() == preset_names()


def test_unknown_preset(capsys):
    assert main(["preset", "e9"]) == EXIT_INVALID


def test_feas1_needs_no_iteration(tmp_path, capsys):
    assert main(["preset", "feas:1", "-o", str(tmp_path), "--no-figure"]) == EXIT_OK
    report = json.loads((tmp_path / "feas_1.report.json").read_text())
    assert report["iterations"] == 0 and report["kappa"] == 1.0


def test_solve_config(tmp_path):
    cfg = write_config(tmp_path / "pair.json", "e1", solver={"init": "zero"}, output={"sampling": 0.05})
    assert main(["solve", str(cfg), "-o", str(tmp_path / "out"), "--no-figure"]) == EXIT_OK
    rec = json.loads((tmp_path / "out" / "pair.tessellation.json").read_text())
    assert len(rec["cells"]) == 2


def test_infinite_exponent_is_a_validation_failure(tmp_path, capsys):
    cfg = tmp_path / "bad.json"
    doc = {"problem": problem_to_dict(get_preset("e1").problem)}
    doc["problem"]["cost"] = [{"alpha": 1.0, "p": "inf"}]
    cfg.write_text(json.dumps(doc))
    assert main(["solve", str(cfg), "-o", str(tmp_path)]) == EXIT_INVALID
    assert "exponent outside (1,inf)" in capsys.readouterr().err


def test_flag_range_is_a_validation_failure(tmp_path):
    cfg = write_config(tmp_path / "e1.json")
    assert main(["solve", str(cfg), "-o", str(tmp_path), "--tol", "1e-20"]) == EXIT_INVALID
    assert main(["solve", str(cfg), "-o", str(tmp_path), "--maxit", "0"]) == EXIT_INVALID


def test_bad_flag_exits_invalid():
    with pytest.raises(SystemExit) as exc:
        main(["preset", "e1", "--init", "random"])
    assert exc.value.code == EXIT_INVALID


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["preset", "e1", "-o", str(blocker / "sub")]) == EXIT_IO


def test_missing_config_is_io_failure(tmp_path):
    assert main(["solve", str(tmp_path / "missing.json")]) == EXIT_IO


def test_non_convergence_exit(tmp_path):
    assert main(["preset", "e2", "-o", str(tmp_path), "--maxit", "1", "--init", "zero", "--no-figure"]) \
        == EXIT_NOT_CONVERGED


def test_render_round_trip(tmp_path):
    assert main(["preset", "e1", "-o", str(tmp_path), "--svg", "--no-figure"]) == EXIT_OK
    out = tmp_path / "again.svg"
    assert main(["render", str(tmp_path / "e1.tessellation.json"), "-o", str(out)]) == EXIT_OK
    assert out.read_text() == (tmp_path / "e1.svg").read_text()


def test_render_rejects_invalid_record(tmp_path):
    rec = tmp_path / "bad.json"
    rec.write_text(json.dumps({"cells": []}))
    assert main(["render", str(rec), "-o", str(tmp_path / "x.svg")]) == EXIT_INVALID


def test_bench_unknown_suite(tmp_path):
    assert main(["bench", "nope", "-o", str(tmp_path)]) == EXIT_INVALID
