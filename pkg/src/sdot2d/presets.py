"""Catalog of named benchmark problems.

Names: ``e1`` .. ``e4``; ``sources:{uniform,product,gaussian,smoothed}``;
``norms:{p3,mix24,mix357,large:k,small:k}``; ``feas:k``;
``interplay:{a,b,c}``; ``domains:{triangle,pentagon,irregular,circle}``.

Random point sets are shipped as fixed coordinates so every run sees the same
problem.  ``reference`` holds known solution quantities (e.g. the feasibility
coefficient at the solution) for comparison in benchmarks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Circle,
    CostFunction,
    Gaussian,
    Polygon,
    Problem,
    ProductPower,
    SmoothedStep,
    Square,
    TargetMeasure,
    Uniform,
)

__all__ = ["Preset", "get_preset", "preset_names", "UnknownPreset", "E4_POINTS", "DOMAIN_POINTS"]


class UnknownPreset(KeyError):
    pass


@dataclass
class Preset:
    name: str
    problem: Problem
    init: str = "grid"
    grid_h: float = 0.05
    description: str = ""
    reference: dict = field(default_factory=dict)


L2 = CostFunction.pnorm(2)

# 8 fixed uniform points in the unit square
E4_POINTS = [
    (0.436, 0.0259), (0.5497, 0.4353), (0.4204, 0.3303), (0.2046, 0.6193),
    (0.2997, 0.2668), (0.6211, 0.5291), (0.1346, 0.5136), (0.1844, 0.7853),
]


def _regular(m: int, phase: float = math.pi / 2):
    return [(math.cos(phase + 2 * math.pi * k / m), math.sin(phase + 2 * math.pi * k / m)) for k in range(m)]


IRREGULAR_PENTAGON = [(0.0, 0.15), (0.62, -0.12), (1.05, 0.42), (0.62, 1.08), (0.02, 0.78)]

# first 10 uniform points of the bounding square falling inside each domain
DOMAIN_POINTS = {
    "triangle": [
        (-0.1067, 0.5852), (0.0019, -0.3919), (-0.2062, -0.4011), (0.7469, -0.4627), (0.7086, -0.3002),
        (0.0406, 0.6256), (0.2927, 0.2016), (-0.221, 0.2161), (0.4653, -0.029), (0.1258, -0.0859),
    ],
    "pentagon": [
        (-0.1172, 0.4997), (0.0021, -0.6787), (-0.4405, 0.0953), (0.3409, 0.645), (-0.2265, -0.6897),
        (-0.5452, 0.0089), (-0.513, 0.1832), (0.0445, 0.5485), (0.3215, 0.0372), (-0.2427, 0.0546),
    ],
    "irregular": [
        (0.4603, 0.7482), (0.5262, -0.0335), (0.2819, 0.4799), (0.7132, 0.8445), (0.2241, 0.4225),
        (0.5496, 0.7805), (0.7025, 0.4413), (0.391, 0.4529), (0.3842, 0.8855), (0.8071, 0.2568),
    ],
    "circle": [
        (-0.1232, 0.4469), (0.956, 0.077), (0.0022, -0.8559), (-0.4631, -0.0002), (0.3585, 0.6075),
        (-0.2381, -0.8681), (-0.4237, 0.8192), (-0.5732, -0.0958), (0.2011, 0.9003), (-0.5394, 0.097),
    ],
}

SOURCE_POINTS = [(0.25, 0.25), (0.5, 0.75), (0.75, 0.25), (0.5, 0.3)]
NORM_POINTS = [(0.25, 0.25), (0.5, 0.75), (0.75, 0.25)]
INTERPLAY_POINTS = [(0.8, 0.8), (0.8, 0.9), (0.9, 0.9), (0.9, 0.8)]

FEAS_KAPPA = {1: 1.0, 2: 0.40243, 3: 0.20029, 4: 0.079527, 5: 0.024611, 6: 0.0066039,
              7: 1.6834e-3, 8: 4.2294e-4, 9: 1.0587e-4, 10: 2.6475e-5}
LARGE_KAPPA = {1: 0.74940, 2: 0.74083, 3: 0.73576, 4: 0.73452, 5: 0.73414}
SMALL_KAPPA = {1: 0.74426, 2: 0.73291, 3: 0.7261, 4: 0.72406, 5: 0.72312}


def _square(points, masses=None, density=None, cost=L2):
    targets = TargetMeasure.uniform(points) if masses is None else TargetMeasure(points, masses)
    return Problem(Square(0.0, 1.0), cost, density or Uniform(1.0), targets)


def _e(name: str) -> Preset:
    if name == "e1":
        p = _square([(0.125, 0.125), (0.5, 0.5)])
        return Preset(name, p, description="two targets, uniform source", reference={"iterations": 2})
    if name == "e2":
        s3 = math.sqrt(3.0)
        pts = [(0.25, 0.25), (0.75, 0.25), (0.5, 0.25 * (1 + s3)), (0.5, 0.25 * (1 + s3 / 3))]
        return Preset(name, _square(pts, density=ProductPower(1)), description="four targets, source 4 x1 x2",
                      reference={"iterations": 7})
    if name == "e3":
        pts = np.array([(646, 3491), (3480, 3686), (1364, 2737), (609, 857), (2967, 509)]) / 4096.0
        return Preset(name, _square(pts), description="five targets, uniform source", reference={"iterations": 2})
    if name == "e4":
        return Preset(name, _square(E4_POINTS), description="eight fixed uniform targets, uniform source",
                      reference={"iterations": 3})
    raise UnknownPreset(name)


def _sources(kind: str) -> Preset:
    dom = Square(0.0, 1.0)
    dens = {
        "uniform": lambda: Uniform(1.0),
        "product": lambda: ProductPower(1),
        "gaussian": lambda: Gaussian(dom, (0.5, 0.5), 10.0),
        "smoothed": lambda: SmoothedStep(),
    }
    kappa = {"uniform": 0.45594, "product": 0.13112, "gaussian": 0.66334, "smoothed": 0.34405}
    if kind not in dens:
        raise UnknownPreset(f"sources:{kind}")
    return Preset(f"sources:{kind}", _square(SOURCE_POINTS, density=dens[kind]()),
                  description=f"four targets, {kind} source", reference={"kappa": kappa[kind]})


def _norms(kind: str) -> Preset:
    if kind == "p3":
        cost, kappa = CostFunction.pnorm(3), 0.74508
    elif kind == "mix24":
        cost, kappa = CostFunction(((0.5, 2.0), (0.5, 4.0))), 0.74652
    elif kind == "mix357":
        cost, kappa = CostFunction(((1.0, 3.0), (1.0, 5.0), (1.0, 7.0))), 0.74023
    elif kind.startswith("large:"):
        k = int(kind.split(":")[1])
        cost, kappa = CostFunction.pnorm(2.0**k), LARGE_KAPPA.get(k)
    elif kind.startswith("small:"):
        k = int(kind.split(":")[1])
        cost, kappa = CostFunction.pnorm(1.0 + 2.0**-k), SMALL_KAPPA.get(k)
    else:
        raise UnknownPreset(f"norms:{kind}")
    ref = {} if kappa is None else {"kappa": kappa}
    return Preset(f"norms:{kind}", _square(NORM_POINTS, cost=cost), description="three targets, p-norm cost",
                  reference=ref)


def _feas(k: int) -> Preset:
    nu = (2.0**-k, 1.0 - 2.0**-k)
    p = _square([(0.25, 0.5), (0.75, 0.5)], masses=nu)
    ref = {"kappa": FEAS_KAPPA[k]} if k in FEAS_KAPPA else {}
    return Preset(f"feas:{k}", p, grid_h=0.1, description=f"two targets, masses (2^-{k}, 1-2^-{k})", reference=ref)


def _interplay(kind: str) -> Preset:
    if kind == "a":
        p, kappa = _square(INTERPLAY_POINTS), 0.02198
    elif kind == "b":
        p, kappa = _square(INTERPLAY_POINTS, masses=(0.75, 0.1, 0.05, 0.1)), 0.14509
    elif kind == "c":
        p, kappa = _square(INTERPLAY_POINTS, density=ProductPower(3)), 0.86597
    else:
        raise UnknownPreset(f"interplay:{kind}")
    return Preset(f"interplay:{kind}", p, description="clustered targets in a corner", reference={"kappa": kappa})


def _domains(kind: str) -> Preset:
    if kind == "triangle":
        dom = Polygon(_regular(3))
    elif kind == "pentagon":
        dom = Polygon(_regular(5))
    elif kind == "irregular":
        dom = Polygon(IRREGULAR_PENTAGON)
    elif kind == "circle":
        dom = Circle((0.0, 0.0), 1.0)
    else:
        raise UnknownPreset(f"domains:{kind}")
    p = Problem(dom, L2, Uniform(1.0 / dom.area), TargetMeasure.uniform(DOMAIN_POINTS[kind]))
    return Preset(f"domains:{kind}", p, init="zero", description=f"ten targets in a {kind}")


def get_preset(name: str) -> Preset:
    name = name.strip().lower()
    head, _, rest = name.partition(":")
    if head in ("e1", "e2", "e3", "e4") and not rest:
        pre = _e(head)
    elif head == "sources":
        pre = _sources(rest)
    elif head == "norms":
        pre = _norms(rest)
    elif head == "feas":
        try:
            k = int(rest)
        except ValueError:
            raise UnknownPreset(name) from None
        if k < 1:
            raise UnknownPreset(name)
        pre = _feas(k)
    elif head == "interplay":
        pre = _interplay(rest)
    elif head == "domains":
        pre = _domains(rest)
    else:
        raise UnknownPreset(name)
    pre.problem = Problem(pre.problem.domain, pre.problem.cost, pre.problem.density, pre.problem.targets, pre.name)
    return pre


def preset_names() -> list[str]:
    names = ["e1", "e2", "e3", "e4"]
    names += [f"sources:{k}" for k in ("uniform", "product", "gaussian", "smoothed")]
    names += ["norms:p3", "norms:mix24", "norms:mix357"]
    names += [f"norms:large:{k}" for k in range(1, 6)] + [f"norms:small:{k}" for k in range(1, 6)]
    names += [f"feas:{k}" for k in range(1, 11)]
    names += [f"interplay:{k}" for k in "abc"]
    names += [f"domains:{k}" for k in ("triangle", "pentagon", "irregular", "circle")]
    return names
