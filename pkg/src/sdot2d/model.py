"""Problem definition: costs, domains, source densities and target measures."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "CostFunction",
    "cost",
    "grad_cost",
    "CoincidentPointsError",
    "Domain",
    "Polygon",
    "Square",
    "Circle",
    "SourceDensity",
    "Uniform",
    "ProductPower",
    "Gaussian",
    "SmoothedStep",
    "CallableDensity",
    "TargetMeasure",
    "Problem",
    "Violation",
    "ProblemError",
    "validate_problem",
    "domain_from_dict",
    "density_from_dict",
]

INTERIOR_MARGIN = 1e-12
MIN_SEPARATION = 1e-9
MASS_SUM_TOL = 1e-12
DENSITY_NORM_TOL = 1e-9


class CoincidentPointsError(ValueError):
    """Raised when the cost gradient is requested at x == y."""


# ---------------------------------------------------------------------------
# cost functions


def _pnorm(a: float, b: float, p: float) -> float:
    if p == 2.0:
        return math.hypot(a, b)
    a, b = abs(a), abs(b)
    m = a if a > b else b
    if m == 0.0:
        return 0.0
    return m * ((a / m) ** p + (b / m) ** p) ** (1.0 / p)


def _pnorm_v(a: np.ndarray, b: np.ndarray, p: float) -> np.ndarray:
    if p == 2.0:
        return np.hypot(a, b)
    a, b = np.abs(a), np.abs(b)
    m = np.maximum(a, b)
    safe = np.where(m > 0.0, m, 1.0)
    return m * ((a / safe) ** p + (b / safe) ** p) ** (1.0 / p)


@dataclass(frozen=True)
class CostFunction:
    """Positive combination ``sum_l alpha_l * ||x - y||_{p_l}``.

    ``terms`` is a tuple of ``(alpha, p)`` pairs.  Validity (alpha > 0,
    1 < p < inf) is reported by :meth:`violations` rather than enforced here,
    so that invalid configurations can be described and rejected cleanly.
    """

    terms: tuple[tuple[float, float], ...]

    def __post_init__(self):
        object.__setattr__(
            self, "terms", tuple((float(a), float(p)) for a, p in self.terms)
        )
        single = self.terms[0] if len(self.terms) == 1 else None
        object.__setattr__(self, "_single", single)

    @classmethod
    def pnorm(cls, p: float, alpha: float = 1.0) -> "CostFunction":
        return cls(((alpha, p),))

    @property
    def all_even(self) -> bool:
        return all(p == int(p) and int(p) % 2 == 0 for _, p in self.terms)

    def violations(self) -> list[str]:
        out = []
        if not self.terms:
            out.append("cost has no terms")
        for alpha, p in self.terms:
            if not (alpha > 0.0 and math.isfinite(alpha)):
                out.append(f"cost weight {alpha!r} is not a positive finite number")
            if not (1.0 < p < math.inf):
                out.append(f"exponent outside (1,inf): p={p!r}")
        return out

    # scalar versions are used by the tracer, where numpy call overhead dominates
    def norm(self, z1: float, z2: float) -> float:
        if self._single is not None:
            a, p = self._single
            return a * (math.hypot(z1, z2) if p == 2.0 else _pnorm(z1, z2, p))
        return sum(a * _pnorm(z1, z2, p) for a, p in self.terms)

    def norm_v(self, z1, z2) -> np.ndarray:
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        out = np.zeros(np.broadcast(z1, z2).shape)
        for a, p in self.terms:
            out = out + a * _pnorm_v(z1, z2, p)
        return out

    def grad(self, z1: float, z2: float) -> tuple[float, float]:
        """Gradient of the norm at ``z != 0``."""
        if self._single is not None and self._single[1] == 2.0:
            n = math.hypot(z1, z2)
            if n == 0.0:
                raise CoincidentPointsError("cost gradient undefined at x == y")
            a = self._single[0]
            return a * z1 / n, a * z2 / n
        g1 = g2 = 0.0
        for a, p in self.terms:
            n = _pnorm(z1, z2, p)
            if n == 0.0:
                raise CoincidentPointsError("cost gradient undefined at x == y")
            if p == 2.0:
                g1 += a * z1 / n
                g2 += a * z2 / n
            else:
                g1 += a * math.copysign((abs(z1) / n) ** (p - 1.0), z1)
                g2 += a * math.copysign((abs(z2) / n) ** (p - 1.0), z2)
        return g1, g2

    def grad_v(self, z1, z2) -> tuple[np.ndarray, np.ndarray]:
        z1 = np.asarray(z1, dtype=float)
        z2 = np.asarray(z2, dtype=float)
        g1 = np.zeros(np.broadcast(z1, z2).shape)
        g2 = np.zeros_like(g1)
        for a, p in self.terms:
            n = _pnorm_v(z1, z2, p)
            if np.any(n == 0.0):
                raise CoincidentPointsError("cost gradient undefined at x == y")
            if p == 2.0:
                g1 = g1 + a * z1 / n
                g2 = g2 + a * z2 / n
            else:
                g1 = g1 + a * np.sign(z1) * (np.abs(z1) / n) ** (p - 1.0)
                g2 = g2 + a * np.sign(z2) * (np.abs(z2) / n) ** (p - 1.0)
        return g1, g2

    def __call__(self, x, y) -> float:
        return self.norm(x[0] - y[0], x[1] - y[1])

    def to_list(self) -> list[dict]:
        return [{"alpha": a, "p": p} for a, p in self.terms]

    @classmethod
    def from_list(cls, items) -> "CostFunction":
        terms = []
        for item in items:
            p = item["p"]
            p = math.inf if p in ("inf", "Infinity") else float(p)
            terms.append((float(item.get("alpha", 1.0)), p))
        return cls(tuple(terms))


def cost(c: CostFunction, x, y) -> float:
    return c(x, y)


def grad_cost(c: CostFunction, x, y) -> tuple[float, float]:
    """Gradient of ``c(., y)`` at ``x``."""
    return c.grad(x[0] - y[0], x[1] - y[1])


# ---------------------------------------------------------------------------
# domains


class Domain:
    """Compact convex planar domain with indexed boundary branches ``-1..-m``."""

    n_branches: int

    def contains(self, x1, x2, tol: float = 0.0):
        raise NotImplementedError

    def hit(self, Y, theta: float) -> tuple[float, int]:
        raise NotImplementedError

    def wall_radius(self, k: int, Y, theta):
        raise NotImplementedError

    def wall_radius_derivative(self, k: int, Y, theta):
        raise NotImplementedError

    def corner(self, k1: int, k2: int):
        raise NotImplementedError

    def is_interior(self, pt, margin: float = INTERIOR_MARGIN) -> bool:
        raise NotImplementedError

    def violations(self) -> list[str]:
        return []

    @property
    def area(self) -> float:
        raise NotImplementedError

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        raise NotImplementedError

    @property
    def center(self) -> tuple[float, float]:
        raise NotImplementedError

    def outline(self, n: int = 256) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError


def _ccw_from_lowest(vertices) -> np.ndarray:
    v = np.asarray(vertices, dtype=float).reshape(-1, 2)
    if len(v) >= 3:
        x, y = v[:, 0], v[:, 1]
        signed = 0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y)
        if signed < 0:
            v = v[::-1]
    start = min(range(len(v)), key=lambda i: (v[i, 1], v[i, 0]))
    return np.roll(v, -start, axis=0)


class Polygon(Domain):
    """Convex polygon.

    Vertices are stored counterclockwise starting at the lowest-then-leftmost
    vertex; edge ``e`` (from vertex ``e`` to ``e+1``) is branch ``-(e+1)``.
    """

    kind = "polygon"

    def __init__(self, vertices):
        self.vertices = _ccw_from_lowest(vertices)
        m = len(self.vertices)
        self.n_branches = m
        d = np.roll(self.vertices, -1, axis=0) - self.vertices
        # outward normal for a ccw edge is the right-hand normal
        self.normals = np.column_stack([d[:, 1], -d[:, 0]])
        lengths = np.hypot(self.normals[:, 0], self.normals[:, 1])
        lengths[lengths == 0] = 1.0
        self.normals = self.normals / lengths[:, None]
        self.offsets = np.einsum("ij,ij->i", self.normals, self.vertices)
        self._nl = [tuple(n) for n in self.normals.tolist()]
        self._ol = self.offsets.tolist()

    def violations(self) -> list[str]:
        v = self.vertices
        if len(v) < 3:
            return ["polygon needs at least 3 vertices"]
        out = []
        d = np.roll(v, -1, axis=0) - v
        cross = d[:, 0] * np.roll(d, -1, axis=0)[:, 1] - d[:, 1] * np.roll(d, -1, axis=0)[:, 0]
        scale = np.max(np.abs(v)) ** 2 + 1.0
        if np.any(np.hypot(d[:, 0], d[:, 1]) == 0):
            out.append("polygon has repeated vertices")
        if np.any(cross <= 1e-14 * scale):
            out.append("polygon is not strictly convex (collinear or reflex vertex)")
        return out

    def contains(self, x1, x2, tol: float = 0.0):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        ok = np.ones(np.broadcast(x1, x2).shape, dtype=bool)
        for (n1, n2), c in zip(self._nl, self._ol):
            ok &= n1 * x1 + n2 * x2 <= c + tol
        return ok

    def contains_point(self, x1: float, x2: float, tol: float = 0.0) -> bool:
        for (n1, n2), c in zip(self._nl, self._ol):
            if n1 * x1 + n2 * x2 > c + tol:
                return False
        return True

    def hit(self, Y, theta: float) -> tuple[float, int]:
        u1, u2 = math.cos(theta), math.sin(theta)
        best_r, best_e = math.inf, -1
        for e, ((n1, n2), c) in enumerate(zip(self._nl, self._ol)):
            den = n1 * u1 + n2 * u2
            if den <= 0.0:
                continue
            r = (c - n1 * Y[0] - n2 * Y[1]) / den
            # ties at a corner go to the smaller |k|, i.e. the earlier edge
            if r < best_r * (1.0 - 4e-16):
                best_r, best_e = r, e
        return best_r, -(best_e + 1)

    def wall_radius(self, k: int, Y, theta):
        e = -k - 1
        n1, n2 = self._nl[e]
        c = self._ol[e]
        if np.ndim(theta) == 0:
            den = n1 * math.cos(theta) + n2 * math.sin(theta)
            return (c - n1 * Y[0] - n2 * Y[1]) / den if den > 0.0 else math.inf
        theta = np.asarray(theta, dtype=float)
        den = n1 * np.cos(theta) + n2 * np.sin(theta)
        with np.errstate(divide="ignore"):
            r = (c - n1 * Y[0] - n2 * Y[1]) / den
        return np.where(den > 0.0, r, np.inf)

    def wall_radius_derivative(self, k: int, Y, theta):
        e = -k - 1
        n1, n2 = self._nl[e]
        c = self._ol[e]
        theta = np.asarray(theta, dtype=float)
        den = n1 * np.cos(theta) + n2 * np.sin(theta)
        dden = -n1 * np.sin(theta) + n2 * np.cos(theta)
        return -(c - n1 * Y[0] - n2 * Y[1]) * dden / den**2

    def corner(self, k1: int, k2: int):
        m = self.n_branches
        e1, e2 = -k1 - 1, -k2 - 1
        if (e1 + 1) % m == e2:
            return tuple(self.vertices[e2])
        if (e2 + 1) % m == e1:
            return tuple(self.vertices[e1])
        raise ValueError(f"branches {k1} and {k2} are not adjacent")

    def is_interior(self, pt, margin: float = INTERIOR_MARGIN) -> bool:
        return all(c - n1 * pt[0] - n2 * pt[1] > margin for (n1, n2), c in zip(self._nl, self._ol))

    @property
    def area(self) -> float:
        x, y = self.vertices[:, 0], self.vertices[:, 1]
        return float(0.5 * np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))

    @property
    def bbox(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])

    @property
    def center(self):
        c = self.vertices.mean(axis=0)
        return float(c[0]), float(c[1])

    def outline(self, n: int = 256) -> np.ndarray:
        return np.vstack([self.vertices, self.vertices[:1]])

    def to_dict(self) -> dict:
        return {"type": "polygon", "vertices": self.vertices.tolist()}


class Square(Polygon):
    """Axis-aligned square ``[a, b]^2``; branches -1 bottom, -2 right, -3 top, -4 left."""

    kind = "square"

    def __init__(self, a: float = 0.0, b: float = 1.0):
        self.a, self.b = float(a), float(b)
        super().__init__([(a, a), (b, a), (b, b), (a, b)])

    def violations(self) -> list[str]:
        return [] if self.b > self.a else [f"square needs b > a (got a={self.a}, b={self.b})"]

    def to_dict(self) -> dict:
        return {"type": "square", "a": self.a, "b": self.b}


class Circle(Domain):
    """Disc with a single smooth boundary branch ``-1``."""

    kind = "circle"
    n_branches = 1

    def __init__(self, center=(0.0, 0.0), radius: float = 1.0):
        self.c = (float(center[0]), float(center[1]))
        self.radius = float(radius)

    def violations(self) -> list[str]:
        return [] if self.radius > 0 else ["circle radius must be positive"]

    def contains(self, x1, x2, tol: float = 0.0):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return np.hypot(x1 - self.c[0], x2 - self.c[1]) <= self.radius + tol

    def contains_point(self, x1: float, x2: float, tol: float = 0.0) -> bool:
        return math.hypot(x1 - self.c[0], x2 - self.c[1]) <= self.radius + tol

    def _radius(self, Y, theta):
        d1, d2 = Y[0] - self.c[0], Y[1] - self.c[1]
        if np.ndim(theta) == 0:
            b = math.cos(theta) * d1 + math.sin(theta) * d2
            cc = d1 * d1 + d2 * d2 - self.radius**2
            return -b + math.sqrt(b * b - cc)
        theta = np.asarray(theta, dtype=float)
        b = np.cos(theta) * d1 + np.sin(theta) * d2
        cc = d1 * d1 + d2 * d2 - self.radius**2
        return -b + np.sqrt(b * b - cc)

    def hit(self, Y, theta: float) -> tuple[float, int]:
        return self._radius(Y, theta), -1

    def wall_radius(self, k: int, Y, theta):
        if k != -1:
            raise ValueError(f"circle has a single branch -1, got {k}")
        return self._radius(Y, theta)

    def wall_radius_derivative(self, k: int, Y, theta):
        theta = np.asarray(theta, dtype=float)
        d1, d2 = Y[0] - self.c[0], Y[1] - self.c[1]
        b = np.cos(theta) * d1 + np.sin(theta) * d2
        db = -np.sin(theta) * d1 + np.cos(theta) * d2
        cc = d1 * d1 + d2 * d2 - self.radius**2
        return -db + b * db / np.sqrt(b * b - cc)

    def corner(self, k1: int, k2: int):
        raise ValueError("a circle has no corners")

    def is_interior(self, pt, margin: float = INTERIOR_MARGIN) -> bool:
        return self.radius - math.hypot(pt[0] - self.c[0], pt[1] - self.c[1]) > margin

    @property
    def area(self) -> float:
        return math.pi * self.radius**2

    @property
    def bbox(self):
        r = self.radius
        return self.c[0] - r, self.c[1] - r, self.c[0] + r, self.c[1] + r

    @property
    def center(self):
        return self.c

    def outline(self, n: int = 256) -> np.ndarray:
        t = np.linspace(0.0, 2 * np.pi, n + 1)
        return np.column_stack([self.c[0] + self.radius * np.cos(t), self.c[1] + self.radius * np.sin(t)])

    def to_dict(self) -> dict:
        return {"type": "circle", "center": list(self.c), "radius": self.radius}


def domain_from_dict(d: dict) -> Domain:
    kind = d["type"]
    if kind == "square":
        return Square(d.get("a", 0.0), d.get("b", 1.0))
    if kind == "polygon":
        return Polygon(d["vertices"])
    if kind == "circle":
        return Circle(d.get("center", (0.0, 0.0)), d.get("radius", 1.0))
    raise ValueError(f"unknown domain type {kind!r}")


# ---------------------------------------------------------------------------
# source densities


class SourceDensity:
    """Vectorised density ``rho(x1, x2)``; ``smoothness`` is the declared C^k class."""

    name = "density"
    smoothness = math.inf

    def __call__(self, x1, x2):
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"type": self.name}


class Uniform(SourceDensity):
    name = "uniform"

    def __init__(self, value: float = 1.0):
        self.value = float(value)

    def __call__(self, x1, x2):
        return np.full(np.broadcast(np.asarray(x1), np.asarray(x2)).shape, self.value)

    def to_dict(self):
        return {"type": "uniform", "value": self.value}


class ProductPower(SourceDensity):
    """``(k+1)^2 x1^k x2^k`` on the unit square; k=1 gives ``4 x1 x2``."""

    name = "product"

    def __init__(self, power: int = 1):
        self.power = int(power)
        self._scale = float((self.power + 1) ** 2)

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return self._scale * (x1 * x2) ** self.power

    def to_dict(self):
        return {"type": "product", "power": self.power}


class Gaussian(SourceDensity):
    """``gamma * exp(-rate * |x - center|^2)`` normalised over the domain.

    The normaliser is computed once with adaptive nested Simpson at 1e-12.
    """

    name = "gaussian"

    def __init__(self, domain: Domain, center=(0.5, 0.5), rate: float = 10.0, gamma: float | None = None):
        self.center = (float(center[0]), float(center[1]))
        self.rate = float(rate)
        if gamma is None:
            from .quad import QuadConfig, domain_integral

            total = domain_integral(domain, self._shape, QuadConfig(tol=1e-12)).value
            gamma = 1.0 / total
        self.gamma = float(gamma)

    def _shape(self, x1, x2):
        return np.exp(-self.rate * ((x1 - self.center[0]) ** 2 + (x2 - self.center[1]) ** 2))

    def __call__(self, x1, x2):
        return self.gamma * self._shape(np.asarray(x1, dtype=float), np.asarray(x2, dtype=float))

    def to_dict(self):
        return {"type": "gaussian", "center": list(self.center), "rate": self.rate}


class SmoothedStep(SourceDensity):
    """Step from 1/2 to 3/2 in ``x1`` smoothed on (0.3, 0.7) by a C^4 polynomial."""

    name = "smoothed_step"
    smoothness = 4

    @staticmethod
    def g(x1):
        return 0.5 + (
            (500 * x1 * (4 * x1 * (175 * (x1 - 3) * x1 + 594) - 1203) + 115173)
            * (10 * x1 - 3) ** 5
            / 131072
        )

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        shape = np.broadcast(x1, np.asarray(x2)).shape
        x1 = np.broadcast_to(x1, shape)
        mid = np.clip(x1, 0.3, 0.7)
        out = np.where(x1 <= 0.3, 0.5, np.where(x1 >= 0.7, 1.5, self.g(mid)))
        return out

    def to_dict(self):
        return {"type": "smoothed_step"}


class CallableDensity(SourceDensity):
    """User-supplied vectorised density with a declared smoothness class."""

    name = "callable"

    def __init__(self, fn: Callable, smoothness: float, label: str = "callable"):
        self.fn = fn
        self.smoothness = smoothness
        self.label = label

    def __call__(self, x1, x2):
        x1 = np.asarray(x1, dtype=float)
        x2 = np.asarray(x2, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(x1, x2), dtype=float), np.broadcast(x1, x2).shape)

    def to_dict(self):
        return {"type": "callable", "label": self.label, "smoothness": self.smoothness}


def density_from_dict(d: dict, domain: Domain) -> SourceDensity:
    kind = d.get("type", "uniform")
    if kind == "uniform":
        return Uniform(d.get("value", 1.0 / domain.area))
    if kind == "product":
        return ProductPower(d.get("power", 1))
    if kind == "gaussian":
        return Gaussian(domain, d.get("center", (0.5, 0.5)), d.get("rate", 10.0))
    if kind == "smoothed_step":
        return SmoothedStep()
    raise ValueError(f"unknown density type {kind!r}")


# ---------------------------------------------------------------------------
# target measure and problem


@dataclass(frozen=True)
class TargetMeasure:
    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 2)
        nu = np.array(self.masses, dtype=float).reshape(-1)
        pts.setflags(write=False)
        nu.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", nu)

    @property
    def n(self) -> int:
        return len(self.points)

    @classmethod
    def uniform(cls, points) -> "TargetMeasure":
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(pts, np.full(len(pts), 1.0 / len(pts)))


@dataclass(frozen=True)
class Violation:
    code: str
    message: str

    def __str__(self):
        return f"{self.code}: {self.message}"


class ProblemError(ValueError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


@dataclass(frozen=True)
class Problem:
    domain: Domain
    cost: CostFunction
    density: SourceDensity
    targets: TargetMeasure
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def n(self) -> int:
        return self.targets.n

    @property
    def points(self) -> np.ndarray:
        return self.targets.points

    @property
    def masses(self) -> np.ndarray:
        return self.targets.masses

    def pair_costs(self) -> np.ndarray:
        y = self.points
        d = y[:, None, :] - y[None, :, :]
        return self.cost.norm_v(d[..., 0], d[..., 1])

    def validate(self) -> "Problem":
        v = validate_problem(self)
        if v:
            raise ProblemError(v)
        return self


def validate_problem(problem: Problem, check_density: bool = True) -> list[Violation]:
    """Return one :class:`Violation` per failed invariant; empty means valid."""
    out: list[Violation] = []
    out += [Violation("cost", m) for m in problem.cost.violations()]
    out += [Violation("domain", m) for m in problem.domain.violations()]

    t = problem.targets
    if t.n < 2:
        out.append(Violation("targets", "need at least two target points"))
    if len(t.masses) != t.n:
        out.append(Violation("targets", "number of masses differs from number of points"))
    else:
        if np.any(t.masses <= 0):
            out.append(Violation("masses", "masses must be positive"))
        if abs(float(np.sum(t.masses)) - 1.0) > MASS_SUM_TOL:
            out.append(Violation("masses", f"masses do not sum to 1 (sum={float(np.sum(t.masses))!r})"))
    if not np.all(np.isfinite(t.points)):
        out.append(Violation("targets", "target coordinates must be finite"))
    elif not problem.domain.violations():
        for i, y in enumerate(t.points):
            if not problem.domain.is_interior(y):
                out.append(Violation("targets", f"target {i} at {tuple(y)} is not strictly interior"))
        d = t.points[:, None, :] - t.points[None, :, :]
        dist = np.where(np.eye(t.n, dtype=bool), np.inf, np.hypot(d[..., 0], d[..., 1]))
        if t.n >= 2 and dist.min() < MIN_SEPARATION:
            out.append(Violation("targets", "target points must be pairwise distinct"))

    dens = problem.density
    if dens.smoothness < 4:
        out.append(Violation("density", f"density smoothness C^{dens.smoothness} below the C^4 needed by Simpson"))
    elif check_density and not out:
        from .quad import QuadConfig, domain_integral

        total = domain_integral(problem.domain, dens, QuadConfig(tol=1e-12)).value
        if abs(total - 1.0) > DENSITY_NORM_TOL:
            out.append(Violation("density", f"density is not normalised (integral={total!r})"))
    return out
