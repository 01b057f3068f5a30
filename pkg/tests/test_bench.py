import csv

import pytest

from sdot2d.bench import COLUMNS, SUITES, run_bench, run_row, suite_rows
from sdot2d.cli import EXIT_OK, main


def numeric_columns(text):
    rows = list(csv.DictReader(text.splitlines()))
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in rows]


def test_suites_cover_catalog():
    assert set(SUITES) == {"hessian-modes", "init-strategies", "methods", "sources", "norms", "feasibility",
                           "interplay", "domains"}
    with pytest.raises(KeyError):
        suite_rows("nope")


def test_bench_writes_artifacts_and_is_deterministic(tmp_path):
    rows = [("e1", "grid"), ("e3", "grid")]
    run_bench("methods", tmp_path / "a", rows=rows)
    run_bench("methods", tmp_path / "b", rows=rows, figures=False)
    for d in ("a", "b"):
        assert (tmp_path / d / "methods.md").read_text().startswith("# bench: methods")
        assert (tmp_path / d / "methods.png").stat().st_size > 0
    assert sorted(p.name for p in (tmp_path / "a" / "methods_figures").iterdir()) == ["e1_grid.png", "e3_grid.png"]
    a = (tmp_path / "a" / "methods.csv").read_text()
    b = (tmp_path / "b" / "methods.csv").read_text()
    assert a.splitlines()[0] == ",".join(COLUMNS)
    assert numeric_columns(a) == numeric_columns(b)


def test_failures_become_rows():
    row = run_row("methods", "no-such-preset", "grid")
    assert row["status"] == "error"
    assert "no-such-preset" in row["message"]


def test_feasibility_suite_matches_reference_kappa(tmp_path):
    rows = run_bench("feasibility", tmp_path, figures=False)
    assert [r["preset"] for r in rows] == [f"feas:{k}" for k in range(1, 7)]
    for r in rows:
        assert r["status"] == "converged"
        assert r["kappa_rel_diff"] <= 1e-2
    assert rows[0]["iterations"] == 0


def test_hessian_modes_e1_discrepancy(tmp_path):
    rows = run_bench("hessian-modes", tmp_path, figures=False,
                     rows=[("e1", "analytic"), ("e1", "forward"), ("e1", "centered")])
    assert rows[0]["hessian_discrepancy"] == ""
    for r in rows:
        assert r["status"] == "converged"
    for r in rows[1:]:
        assert r["hessian_discrepancy"] <= 1e-6


def test_init_strategies_e3_grid_not_worse_than_homotopy():
    grid = run_row("init-strategies", "e3", "grid")
    homo = run_row("init-strategies", "e3", "homotopy")
    assert grid["status"] == homo["status"] == "converged"
    assert grid["iterations"] <= homo["iterations"]


@pytest.mark.slow
def test_bench_cli(tmp_path, capsys):
    assert main(["bench", "interplay", "-o", str(tmp_path), "--no-figures"]) == EXIT_OK
    out = capsys.readouterr().out.splitlines()
    assert [line.split("\t")[0] for line in out] == ["interplay:a", "interplay:b", "interplay:c"]
    assert all(line.split("\t")[2] == "converged" for line in out)
