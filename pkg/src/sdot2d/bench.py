"""Benchmark suites over the preset catalog, written as CSV, Markdown and PNG.

Each row solves one preset (optionally in a variant such as an initial-guess
strategy).  Failures become rows with their status and message; a suite never
aborts half-way.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import math
import time
from pathlib import Path

import numpy as np

from .io import record_from_solution
from .presets import get_preset
from .solve import SolveOptions, fd_hessian, hessian, solve, tessellate

__all__ = ["SUITES", "COLUMNS", "suite_rows", "run_row", "run_bench", "to_csv", "to_markdown"]

E_PRESETS = ["e1", "e2", "e3", "e4"]

SUITES = {
    "hessian-modes": [(p, m) for p in E_PRESETS for m in ("analytic", "forward", "centered")],
    "init-strategies": [(p, m) for p in E_PRESETS for m in ("grid", "homotopy", "ns-homotopy")],
    "methods": [(p, "grid") for p in E_PRESETS],
    "sources": [(f"sources:{k}", "") for k in ("uniform", "product", "gaussian", "smoothed")],
    "norms": [(f"norms:{k}", "") for k in ("p3", "mix24", "mix357")]
    + [(f"norms:large:{k}", "") for k in range(1, 6)]
    + [(f"norms:small:{k}", "") for k in range(1, 6)],
    "feasibility": [(f"feas:{k}", "") for k in range(1, 7)],
    "interplay": [(f"interplay:{k}", "") for k in "abc"],
    "domains": [(f"domains:{k}", "") for k in ("triangle", "pentagon", "irregular", "circle")],
}

COLUMNS = [
    "suite", "preset", "variant", "status", "error", "iterations", "damping", "wall_time", "kappa",
    "reference_kappa", "kappa_rel_diff", "init_iterations", "homotopy_steps", "hessian_discrepancy", "message",
]


def suite_rows(suite: str) -> list[tuple[str, str]]:
    if suite not in SUITES:
        raise KeyError(f"unknown bench suite {suite!r}; choose from {', '.join(SUITES)}")
    return list(SUITES[suite])


def run_row(suite: str, preset: str, variant: str, options: SolveOptions | None = None,
            figure_path=None) -> dict:
    """Solve one row; never raises for solver failures."""
    options = options or SolveOptions()
    row = {c: "" for c in COLUMNS}
    row.update(suite=suite, preset=preset, variant=variant)
    t0 = time.perf_counter()
    try:
        pre = get_preset(preset)
        init = pre.init
        opts = options
        if suite == "hessian-modes":
            opts = dataclasses.replace(options, hessian_mode=variant)
        elif suite == "init-strategies":
            init = variant
        w, rep = solve(pre.problem, init=init, grid_h=pre.grid_h, maxit=opts.maxit, tol=opts.newton_tol,
                       options=opts)
        row.update(
            status=rep.status,
            error=rep.final_error,
            iterations=rep.iterations,
            damping=rep.damping_halvings,
            kappa=rep.kappa,
            init_iterations=rep.init_iterations,
            homotopy_steps=rep.homotopy_steps,
        )
        ref = pre.reference.get("kappa")
        if ref is not None:
            row["reference_kappa"] = ref
            row["kappa_rel_diff"] = abs(rep.kappa - ref) / abs(ref)
        tess = getattr(rep, "tessellation", None) or tessellate(pre.problem, w, opts)
        if suite == "hessian-modes" and variant != "analytic":
            H = hessian(pre.problem, w, tess.boundaries, opts)
            g0 = tess.measures - pre.problem.masses
            Hfd = fd_hessian(pre.problem, w, variant, opts, g0=g0)
            row["hessian_discrepancy"] = float(np.max(np.abs(H - Hfd)))
        if figure_path is not None:
            from .plotting import plot_record

            rec = record_from_solution(pre.problem, w, tess, rep.kappa)
            plot_record(rec, figure_path, title=f"{preset} {variant}".strip())
    except Exception as exc:  # per-row isolation: record and continue
        row.update(status="error", message=f"{type(exc).__name__}: {exc}")
    row["wall_time"] = time.perf_counter() - t0
    return row


def _cell(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(rows: list[dict]) -> str:
    buf = _io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(COLUMNS)
    for r in rows:
        wr.writerow([_cell(r[c]) for c in COLUMNS])
    return buf.getvalue()


def _md(v, col: str) -> str:
    if v == "" or v is None:
        return ""
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if col == "wall_time":
            return f"{v:.2f}"
        if col in ("kappa", "reference_kappa"):
            return f"{v:.5g}"
        return f"{v:.3e}"
    return str(v).replace("|", "\\|")


def to_markdown(rows: list[dict], title: str) -> str:
    cols = [c for c in COLUMNS if c != "suite" and any(r[c] != "" for r in rows)]
    out = [f"# {title}", "", "| " + " | ".join(cols) + " |", "|" + "---|" * len(cols)]
    for r in rows:
        out.append("| " + " | ".join(_md(r[c], c) for c in cols) + " |")
    return "\n".join(out) + "\n"


def _slug(preset: str, variant: str) -> str:
    s = preset.replace(":", "_")
    return f"{s}_{variant}" if variant else s


def run_bench(suite: str, out_dir, options: SolveOptions | None = None, figures: bool = True,
              rows: list[tuple[str, str]] | None = None) -> list[dict]:
    """Run a suite and write ``<suite>.csv``, ``<suite>.md`` and ``<suite>.png`` into ``out_dir``.

    With ``figures`` each row's tessellation is also drawn to ``<suite>_figures/``.
    """
    todo = rows if rows is not None else suite_rows(suite)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fig_dir = out / f"{suite}_figures"
    if figures:
        fig_dir.mkdir(exist_ok=True)
    results = []
    for preset, variant in todo:
        fp = fig_dir / f"{_slug(preset, variant)}.png" if figures else None
        results.append(run_row(suite, preset, variant, options, fp))
    (out / f"{suite}.csv").write_text(to_csv(results), encoding="utf-8")
    (out / f"{suite}.md").write_text(to_markdown(results, f"bench: {suite}"), encoding="utf-8")
    from .plotting import plot_bench

    plot_bench(results, out / f"{suite}.png", f"bench: {suite}")
    return results
