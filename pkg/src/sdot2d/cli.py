"""Command line interface: ``sdot2d {solve,preset,render,bench}``.

Exit codes: 0 converged (or success), 1 validation failure, 2 solver did not
converge, 3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

from .io import (
    ConfigError,
    RunConfig,
    load_config,
    problem_to_dict,
    read_record,
    record_from_solution,
    write_json,
)
from .model import ProblemError, validate_problem
from .presets import UnknownPreset, get_preset, preset_names
from .quad import QuadConfig
from .solve import SolveOptions, solve, tessellate
from .trace import TraceError

__all__ = ["main", "run_solve", "run_preset", "EXIT_OK", "EXIT_INVALID", "EXIT_NOT_CONVERGED", "EXIT_IO"]

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_NOT_CONVERGED = 2
EXIT_IO = 3

INIT_CHOICES = ("zero", "grid", "homotopy", "ns-homotopy")

log = logging.getLogger("sdot2d")


class _Parser(argparse.ArgumentParser):
    # bad arguments are a validation failure, not the "non-convergence" code 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def _solver_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("solver options")
    g.add_argument("--tol", type=float, help="quadrature tolerance (default 1e-12)")
    g.add_argument("--newton-tol", type=float, help="Newton stopping tolerance on max |grad| (default 1e-8)")
    g.add_argument("--init", choices=INIT_CHOICES, help="initial-guess strategy")
    g.add_argument("--grid-h", type=float, help="grid spacing of the grid initial guess")
    g.add_argument("--maxit", type=int, help="maximum Newton iterations (default 20)")
    g.add_argument("--threads", type=int, help="worker threads for cell tracing (default 1)")
    return p


def _output_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("output options")
    g.add_argument("-o", "--out-dir", help="directory for output files (default: current directory)")
    g.add_argument("--svg", action="store_true", help="also write an SVG drawing")
    g.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    g.add_argument("--sampling", type=float, help="max angular step of exported arc polylines")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="sdot2d", description="Semi-discrete optimal transport in 2-D via Laguerre cell tracing.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="verb", required=True, parser_class=_Parser)
    sp = sub.add_parser("solve", parents=[_solver_flags(), _output_flags()], help="solve a JSON configuration")
    sp.add_argument("config")
    pp = sub.add_parser("preset", parents=[_solver_flags(), _output_flags()], help="solve a catalog problem")
    pp.add_argument("name", help="preset name, or 'list'")
    rp = sub.add_parser("render", help="render a tessellation record to SVG")
    rp.add_argument("record")
    rp.add_argument("-o", "--output", required=True)
    rp.add_argument("--labels", action="store_true", help="number the target markers")
    bp = sub.add_parser("bench", parents=[_solver_flags()], help="run a benchmark suite")
    bp.add_argument("suite")
    bp.add_argument("-o", "--out-dir", required=True)
    bp.add_argument("--no-figures", action="store_true", help="skip per-row tessellation figures")
    return parser


def _check_ranges(cfg: RunConfig) -> list[str]:
    bad = []
    if not 1e-13 <= cfg.quad_tol <= 1e-3:
        bad.append(f"--tol must lie in [1e-13, 1e-3], got {cfg.quad_tol!r}")
    if not 0 < cfg.newton_tol < 1:
        bad.append(f"--newton-tol must lie in (0, 1), got {cfg.newton_tol!r}")
    if not 0 < cfg.grid_h <= 1:
        bad.append(f"--grid-h must lie in (0, 1], got {cfg.grid_h!r}")
    if not 1 <= cfg.maxit <= 1000:
        bad.append(f"--maxit must lie in [1, 1000], got {cfg.maxit!r}")
    if not 1 <= cfg.threads <= 256:
        bad.append(f"--threads must lie in [1, 256], got {cfg.threads!r}")
    if cfg.init not in INIT_CHOICES:
        bad.append(f"unknown init strategy {cfg.init!r}")
    if not 0 < cfg.sampling <= 1:
        bad.append(f"--sampling must lie in (0, 1], got {cfg.sampling!r}")
    return bad


def _apply_flags(cfg: RunConfig, args) -> RunConfig:
    over = {}
    for flag, fieldname in (("tol", "quad_tol"), ("newton_tol", "newton_tol"), ("init", "init"),
                            ("grid_h", "grid_h"), ("maxit", "maxit"), ("threads", "threads")):
        v = getattr(args, flag, None)
        if v is not None:
            over[fieldname] = v
    cfg = dataclasses.replace(cfg, **over)
    if getattr(args, "sampling", None) is not None:
        cfg.output = {**cfg.output, "sampling": args.sampling}
    return cfg


def _options(cfg: RunConfig) -> SolveOptions:
    return SolveOptions(newton_tol=cfg.newton_tol, maxit=cfg.maxit, quad=QuadConfig(cfg.quad_tol),
                        threads=cfg.threads)


def _ensure_writable(path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, probe = tempfile.mkstemp(dir=path.parent, prefix=".sdot2d-probe-")
    os.close(fd)
    os.unlink(probe)


def _paths(cfg: RunConfig, stem: str, out_dir, svg: bool, figure: bool) -> dict:
    base = Path(out_dir) if out_dir else Path(".")
    o = cfg.output
    paths = {
        "tessellation": base / o.get("tessellation", f"{stem}.tessellation.json"),
        "report": base / o.get("report", f"{stem}.report.json"),
    }
    if svg or "svg" in o:
        paths["svg"] = base / o.get("svg", f"{stem}.svg")
    if figure:
        paths["figure"] = base / o.get("figure", f"{stem}.png")
    return paths


def run_solve(cfg: RunConfig, stem: str = "run", out_dir=None, svg: bool = False, figure: bool = True,
              stdout=None) -> int:
    """Solve a validated configuration and write its artifacts; returns the exit code."""
    stdout = stdout or sys.stdout
    bad = _check_ranges(cfg)
    if bad:
        for b in bad:
            print(f"validation: {b}", file=sys.stderr)
        return EXIT_INVALID
    violations = validate_problem(cfg.problem)
    if violations:
        for v in violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INVALID
    paths = _paths(cfg, stem, out_dir, svg, figure)
    try:
        for p in paths.values():
            _ensure_writable(p)
    except OSError as exc:
        print(f"io: cannot write output: {exc}", file=sys.stderr)
        return EXIT_IO

    options = _options(cfg)
    problem = cfg.problem
    try:
        w, rep = solve(problem, init=cfg.init, grid_h=cfg.grid_h, maxit=cfg.maxit, tol=cfg.newton_tol,
                       options=options, delta0=cfg.delta0)
    except (TraceError, ArithmeticError, RuntimeError, np.linalg.LinAlgError, ValueError) as exc:
        print(f"solver: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    tess = getattr(rep, "tessellation", None) or tessellate(problem, w, options)

    summary = {k: v for k, v in rep.to_dict().items() if k != "history"}
    record = record_from_solution(problem, w, tess, rep.kappa, summary, cfg.sampling)
    report_doc = {
        "name": problem.name,
        "weights": [float(x) for x in w],
        **rep.to_dict(),
        "options": {"init": cfg.init, "grid_h": cfg.grid_h, "newton_tol": cfg.newton_tol,
                    "quad_tol": cfg.quad_tol, "maxit": cfg.maxit, "threads": cfg.threads},
        "problem": problem_to_dict(problem),
    }
    try:
        write_json(paths["tessellation"], record.to_dict())
        write_json(paths["report"], report_doc)
        if "svg" in paths:
            from .svg import render_svg

            paths["svg"].write_text(render_svg(record), encoding="utf-8")
        if "figure" in paths:
            from .plotting import plot_record

            plot_record(record, paths["figure"])
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO

    print(f"status\t{rep.status}", file=stdout)
    print(f"iterations\t{rep.iterations}", file=stdout)
    print(f"error\t{rep.final_error!r}", file=stdout)
    print(f"kappa\t{rep.kappa!r}", file=stdout)
    for name, p in paths.items():
        print(f"{name}\t{p}", file=stdout)
    for msg in rep.warnings:
        print(f"warning: {msg}", file=sys.stderr)
    return EXIT_OK if rep.converged else EXIT_NOT_CONVERGED


def run_preset(name: str, args=None, stdout=None) -> int:
    pre = get_preset(name)
    cfg = RunConfig(pre.problem, init=pre.init, grid_h=pre.grid_h)
    if args is not None:
        cfg = _apply_flags(cfg, args)
    stem = pre.name.replace(":", "_")
    return run_solve(cfg, stem, getattr(args, "out_dir", None), getattr(args, "svg", False),
                     not getattr(args, "no_figure", False), stdout)


def _cmd_solve(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INVALID
    except json.JSONDecodeError as exc:
        print(f"io: {args.config} is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    cfg = _apply_flags(cfg, args)
    stem = Path(args.config).stem
    return run_solve(cfg, stem, args.out_dir, args.svg, not args.no_figure)


def _cmd_preset(args) -> int:
    if args.name == "list":
        for n in preset_names():
            print(n)
        return EXIT_OK
    try:
        return run_preset(args.name, args)
    except UnknownPreset:
        print(f"validation: unknown preset {args.name!r} (try 'sdot2d preset list')", file=sys.stderr)
        return EXIT_INVALID


def _cmd_render(args) -> int:
    from .svg import SvgOptions, render_svg

    try:
        rec = read_record(args.record)
    except ConfigError as exc:
        for v in exc.violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INVALID
    except (OSError, json.JSONDecodeError) as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        text = render_svg(rec, SvgOptions(show_labels=args.labels))
    except ConfigError as exc:
        for v in exc.violations:
            print(f"validation: {v}", file=sys.stderr)
        return EXIT_INVALID
    try:
        Path(args.output).write_text(text, encoding="utf-8")
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .bench import SUITES, run_bench

    if args.suite not in SUITES:
        print(f"validation: unknown suite {args.suite!r}; choose from {', '.join(SUITES)}", file=sys.stderr)
        return EXIT_INVALID
    cfg = _apply_flags(RunConfig(get_preset("e1").problem), args)
    bad = [b for b in _check_ranges(cfg) if "init" not in b]
    if bad:
        for b in bad:
            print(f"validation: {b}", file=sys.stderr)
        return EXIT_INVALID
    try:
        rows = run_bench(args.suite, args.out_dir, _options(cfg), figures=not args.no_figures)
    except OSError as exc:
        print(f"io: {exc}", file=sys.stderr)
        return EXIT_IO
    for r in rows:
        print(f"{r['preset']}\t{r['variant']}\t{r['status']}\t{r['iterations']}\t{r['error']}\t{r['kappa']}")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(message)s")
    handler = {"solve": _cmd_solve, "preset": _cmd_preset, "render": _cmd_render, "bench": _cmd_bench}[args.verb]
    try:
        return handler(args)
    except ProblemError as exc:
        print(f"validation: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
