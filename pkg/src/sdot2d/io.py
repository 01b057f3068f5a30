"""JSON configuration and tessellation records.

Floats are written with Python's shortest round-trip ``repr`` so a record
read back compares bit-for-bit with the one written.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema

from .model import (
    CostFunction,
    Problem,
    TargetMeasure,
    Violation,
    density_from_dict,
    domain_from_dict,
    validate_problem,
)

__all__ = [
    "ConfigError",
    "RunConfig",
    "TessellationRecord",
    "load_schema",
    "parse_config",
    "load_config",
    "problem_to_dict",
    "record_from_solution",
    "dump_json",
    "write_json",
    "read_record",
]

DEFAULT_SAMPLING = 0.01


class ConfigError(ValueError):
    """Configuration failed schema or invariant validation."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def load_schema(name: str) -> dict:
    text = resources.files("sdot2d").joinpath("schema", f"{name}.schema.json").read_text()
    return json.loads(text)


def _schema_violations(doc, schema_name: str) -> list[Violation]:
    validator = jsonschema.Draft202012Validator(load_schema(schema_name))
    out = []
    for err in sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path)):
        where = "/".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(Violation("schema", f"{where}: {err.message}"))
    return out


@dataclass
class RunConfig:
    problem: Problem
    init: str = "grid"
    grid_h: float = 0.05
    newton_tol: float = 1e-8
    quad_tol: float = 1e-12
    maxit: int = 20
    threads: int = 1
    delta0: float = 0.1
    output: dict = field(default_factory=dict)

    @property
    def sampling(self) -> float:
        return self.output.get("sampling", DEFAULT_SAMPLING)


def problem_from_dict(d: dict) -> Problem:
    domain = domain_from_dict(d["domain"])
    cost = CostFunction.from_list(d["cost"])
    pts = d["targets"]["points"]
    masses = d["targets"].get("masses")
    targets = TargetMeasure.uniform(pts) if masses is None else TargetMeasure(pts, masses)
    if len(targets.masses) != len(targets.points):
        raise ConfigError([Violation("targets", "number of masses differs from number of points")])
    dens = d.get("density", {"type": "uniform"})
    if domain.violations():
        raise ConfigError([Violation("domain", m) for m in domain.violations()])
    try:
        density = density_from_dict(dens, domain)
    except (ValueError, ArithmeticError) as exc:
        raise ConfigError([Violation("density", str(exc))]) from None
    return Problem(domain, cost, density, targets, d.get("name", ""))


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration document and build the run; raises :class:`ConfigError`."""
    v = _schema_violations(doc, "config")
    if v:
        raise ConfigError(v)
    problem = problem_from_dict(doc["problem"])
    v = validate_problem(problem)
    if v:
        raise ConfigError(v)
    s = doc.get("solver", {})
    return RunConfig(
        problem,
        init=s.get("init", "grid"),
        grid_h=s.get("grid_h", 0.05),
        newton_tol=s.get("newton_tol", 1e-8),
        quad_tol=s.get("quad_tol", 1e-12),
        maxit=s.get("maxit", 20),
        threads=s.get("threads", 1),
        delta0=s.get("delta0", 0.1),
        output=dict(doc.get("output", {})),
    )


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration file.

    ``OSError`` and ``json.JSONDecodeError`` propagate; the caller maps them to I/O failures.
    """
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    return parse_config(doc)


def problem_to_dict(problem: Problem) -> dict:
    return {
        "name": problem.name,
        "domain": problem.domain.to_dict(),
        "cost": problem.cost.to_list(),
        "density": problem.density.to_dict(),
        "targets": {"points": problem.points.tolist(), "masses": problem.masses.tolist()},
    }


def _jsonable(x):
    if isinstance(x, float) and not math.isfinite(x):
        return repr(x)
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if hasattr(x, "tolist"):
        return _jsonable(x.tolist())
    return x


@dataclass
class TessellationRecord:
    targets: list
    masses: list
    weights: list
    kappa: float
    domain: dict
    cost: list
    cells: list
    density: dict = field(default_factory=dict)
    name: str = ""
    report: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "name": self.name,
            "targets": [list(map(float, p)) for p in self.targets],
            "masses": [float(m) for m in self.masses],
            "weights": [float(w) for w in self.weights],
            "kappa": float(self.kappa),
            "domain": self.domain,
            "cost": self.cost,
            "density": self.density,
            "cells": self.cells,
        }
        if self.report:
            d["report"] = self.report
        return _jsonable(d)

    @classmethod
    def from_dict(cls, d: dict) -> "TessellationRecord":
        v = _schema_violations(d, "tessellation")
        if v:
            raise ConfigError(v)
        return cls(
            targets=d["targets"],
            masses=d["masses"],
            weights=d["weights"],
            kappa=d["kappa"],
            domain=d["domain"],
            cost=d["cost"],
            cells=d["cells"],
            density=d.get("density", {}),
            name=d.get("name", ""),
            report=d.get("report", {}),
        )

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TessellationRecord":
        return cls.from_dict(json.loads(text))

    def cell_polylines(self) -> list:
        """Per cell, the list of arc polylines as ``(m, 2)`` nested lists."""
        return [[a["points"] for a in c["arcs"]] for c in self.cells]


def record_from_solution(problem: Problem, w, tess, kappa: float, report: dict | None = None,
                         sampling: float = DEFAULT_SAMPLING) -> TessellationRecord:
    """Build a record from a solved tessellation; arcs are sampled at angular step ``sampling``."""
    cells = []
    for b, m in zip(tess.boundaries, tess.measures):
        arcs = []
        for a in b.arcs:
            arcs.append({
                "neighbor": int(a.k),
                "theta_start": float(a.theta_start),
                "theta_end": float(a.theta_end),
                "wraps": bool(a.wraps),
                "points": a.points(sampling).tolist(),
            })
        cells.append({"index": int(b.index), "measure": float(m), "arcs": arcs})
    return TessellationRecord(
        targets=problem.points.tolist(),
        masses=problem.masses.tolist(),
        weights=[float(x) for x in w],
        kappa=float(kappa),
        domain=problem.domain.to_dict(),
        cost=problem.cost.to_list(),
        cells=cells,
        density=problem.density.to_dict(),
        name=problem.name,
        report=_jsonable(report or {}),
    )


def dump_json(doc) -> str:
    # json uses float.__repr__, the shortest string that round-trips exactly
    return json.dumps(_jsonable(doc), indent=1, allow_nan=False) + "\n"


def write_json(path, doc) -> None:
    Path(path).write_text(dump_json(doc), encoding="utf-8")


def read_record(path) -> TessellationRecord:
    with open(path, encoding="utf-8") as fh:
        return TessellationRecord.from_dict(json.load(fh))
