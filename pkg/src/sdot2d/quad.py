"""Composite and adaptive Simpson quadrature, cell measures and Hessian line integrals.

Integrands passed to this module are vectorised: ``f(x)`` receives a 1-d
array of abscissae and returns an array of the same shape.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "QuadConfig",
    "QuadResult",
    "simpson",
    "comp_simpson",
    "adapt_simpson",
    "radial_integral",
    "polar_integral",
    "domain_integral",
    "cell_measure",
    "hessian_entry",
    "GradientCoincidenceError",
]

EPS = float(np.finfo(float).eps)


class GradientCoincidenceError(ArithmeticError):
    """The two cost gradients coincide at a boundary quadrature node."""


@dataclass(frozen=True)
class QuadConfig:
    tol: float = 1e-12
    n_max_initial: int = 1024
    machine_eps: float = EPS

    def __post_init__(self):
        if not self.tol > self.machine_eps:
            raise ValueError(f"quadrature tol {self.tol!r} must exceed machine eps")

    def scaled(self, factor: float) -> "QuadConfig":
        return QuadConfig(max(self.tol * factor, 4 * self.machine_eps), self.n_max_initial, self.machine_eps)


@dataclass
class QuadResult:
    value: float
    err_estimate: float
    evaluations: int
    converged: bool = True
    accepted: list = field(default_factory=list, repr=False)

    def __add__(self, other: "QuadResult") -> "QuadResult":
        return QuadResult(
            self.value + other.value,
            self.err_estimate + other.err_estimate,
            self.evaluations + other.evaluations,
            self.converged and other.converged,
            self.accepted + other.accepted,
        )


def _simpson_weights(n: int) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w


def simpson(f: Callable, a: float, b: float, n: int) -> float:
    """Composite Simpson 1/3 rule with ``n`` (even) subintervals."""
    if n < 2 or n % 2:
        raise ValueError(f"Simpson needs an even n >= 2, got {n}")
    x = np.linspace(a, b, n + 1)
    fx = np.asarray(f(x), dtype=float)
    h = (b - a) / n
    return float(h / 3.0 * np.dot(_simpson_weights(n), fx))


def comp_simpson(f: Callable, a: float, b: float, tol: float, n_max: int) -> QuadResult:
    """Double ``n`` from 2 until the Richardson estimate ``16|I_2n - I_n|/15`` drops below ``tol``.

    Stops early (``converged=False``) when the predicted number of subintervals
    ``n (err/tol)^(1/4)`` exceeds ``n_max``.  Samples are reused across doublings.
    """
    i_max = int(math.floor(math.log2(n_max)))
    n = 2
    x = np.linspace(a, b, n + 1)
    fx = np.asarray(f(x), dtype=float)
    evals = n + 1
    i_n = (b - a) / n / 3.0 * np.dot(_simpson_weights(n), fx)
    err = math.inf
    i_2n = i_n
    for _ in range(i_max):
        h2 = (b - a) / (2 * n)
        mid = a + h2 * (2 * np.arange(n) + 1)
        fm = np.asarray(f(mid), dtype=float)
        evals += n
        f2 = np.empty(2 * n + 1)
        f2[0::2] = fx
        f2[1::2] = fm
        i_2n = h2 / 3.0 * np.dot(_simpson_weights(2 * n), f2)
        err = 16.0 * abs(i_2n - i_n) / 15.0
        if not math.isfinite(err):
            return QuadResult(float(i_2n), math.inf, evals, False)
        predicted = n * (err / tol) ** 0.25
        predicted = 2 * math.floor(predicted / 2)
        if err < tol:
            return QuadResult(float(i_2n), err, evals, True)
        if predicted > n_max:
            return QuadResult(float(i_2n), err, evals, False)
        n *= 2
        fx = f2
        i_n = i_2n
    return QuadResult(float(i_2n), err, evals, err < tol)


def adapt_simpson(f: Callable, a: float, b: float, config: QuadConfig | None = None) -> QuadResult:
    """Dyadic splitting of ``[a, b]``; level ``i`` pieces must meet ``tol / 2**i``.

    ``accepted`` on the result lists the ``(lo, hi)`` intervals that were accepted.
    """
    config = config or QuadConfig()
    tol = config.tol
    n_max = config.n_max_initial
    i_max = int(math.floor(math.log2(tol / config.machine_eps)))
    total = 0.0
    err_total = 0.0
    evals = 0
    accepted: list[tuple[float, float]] = []
    pending = [(a, b)]
    best: dict = {}
    for i in range(i_max + 1):
        tol_i = tol / 2**i
        still = []
        for lo, hi in pending:
            res = comp_simpson(f, lo, hi, tol_i, n_max)
            evals += res.evaluations
            if res.err_estimate < tol_i:
                total += res.value
                err_total += res.err_estimate
                accepted.append((lo, hi))
            else:
                still.append((lo, hi))
                best[(lo, hi)] = res
        if not still:
            return QuadResult(total, err_total, evals, True, accepted)
        if i == i_max:
            # depth exhausted: keep the best available values and flag it
            for key in still:
                total += best[key].value
                err_total += best[key].err_estimate
            return QuadResult(total, err_total, evals, False, accepted)
        pending = []
        for lo, hi in still:
            mid = 0.5 * (lo + hi)
            pending.append((lo, mid))
            pending.append((mid, hi))
        if i % 3 == 2:
            n_max *= 8
    return QuadResult(total, err_total, evals, False, accepted)  # pragma: no cover


# ---------------------------------------------------------------------------
# polar integrals


def _constant_value(rho) -> float | None:
    from .model import Uniform

    return rho.value if isinstance(rho, Uniform) else None


def radial_integral(rho, Y, theta: np.ndarray, r: np.ndarray, tol: float) -> np.ndarray:
    """``int_0^r rho(Y + D u(theta)) D dD`` for arrays of ``theta`` and ``r``.

    All nodes are refined together by Simpson doubling on ``t = D / r``; nodes
    that still miss ``tol`` at 2**16 subintervals fall back to adaptive Simpson.
    """
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    r = np.atleast_1d(np.asarray(r, dtype=float))
    const = _constant_value(rho)
    if const is not None:
        return 0.5 * const * r * r
    u1 = np.cos(theta)[:, None]
    u2 = np.sin(theta)[:, None]
    rr = r[:, None]

    def g(t):
        t = np.asarray(t)[None, :]
        return rho(Y[0] + rr * t * u1, Y[1] + rr * t * u2) * t

    n = 2
    ft = g(np.linspace(0.0, 1.0, n + 1))
    i_n = ft @ _simpson_weights(n) / (3.0 * n)
    scale = r * r
    for _ in range(16):
        mid = (2 * np.arange(n) + 1) / (2.0 * n)
        fm = g(mid)
        f2 = np.empty((len(theta), 2 * n + 1))
        f2[:, 0::2] = ft
        f2[:, 1::2] = fm
        i_2n = f2 @ _simpson_weights(2 * n) / (6.0 * n)
        err = 16.0 * np.abs(i_2n - i_n) / 15.0 * scale
        n *= 2
        ft = f2
        i_n = i_2n
        if np.all(err < tol):
            return scale * i_2n
    out = scale * i_n
    for m in np.nonzero(~(err < tol))[0]:
        fm = lambda t, m=m: rho(Y[0] + r[m] * t * u1[m, 0], Y[1] + r[m] * t * u2[m, 0]) * t
        out[m] = scale[m] * adapt_simpson(fm, 0.0, 1.0, QuadConfig(max(tol / scale[m], 1e-15))).value
    return out


def polar_integral(Y, pieces: Sequence, rho, config: QuadConfig) -> QuadResult:
    """Integrate ``rho`` over a star-shaped region given as polar pieces about ``Y``.

    ``pieces`` is a sequence of ``(theta_start, theta_end, r_fn)`` with ``r_fn``
    vectorised.  Each piece gets a tolerance proportional to its angular share.
    """
    total = QuadResult(0.0, 0.0, 0, True)
    span = sum(te - ts for ts, te, _ in pieces)
    for ts, te, r_fn in pieces:
        if te <= ts:
            continue
        share = (te - ts) / span
        tol = config.tol * share
        inner_tol = tol / 10.0

        def outer(th, r_fn=r_fn, inner_tol=inner_tol):
            return radial_integral(rho, Y, th, r_fn(th), inner_tol)

        total = total + adapt_simpson(outer, ts, te, config.scaled(share))
    return total


def domain_integral(domain, f, config: QuadConfig | None = None) -> QuadResult:
    """``int_Omega f`` by polar integration about the domain centre."""
    config = config or QuadConfig()
    C = domain.center
    pieces = []
    if domain.n_branches == 1:
        pieces.append((0.0, 2 * math.pi, lambda th: domain.wall_radius(-1, C, th)))
    else:
        verts = domain.vertices
        angles = np.arctan2(verts[:, 1] - C[1], verts[:, 0] - C[0])
        m = len(verts)
        for e in range(m):
            ts = angles[e]
            te = angles[(e + 1) % m]
            while te <= ts:
                te += 2 * math.pi
            pieces.append((ts, te, lambda th, k=-(e + 1): domain.wall_radius(k, C, th)))
    return polar_integral(C, pieces, f, config)


def cell_measure(boundary, ctx, rho, config: QuadConfig | None = None) -> QuadResult:
    """``mu(A(Y))`` as the sum over the smooth arcs of the traced boundary."""
    config = config or QuadConfig()
    pieces = [(a.theta_start, a.theta_end, a.r_at) for a in boundary.arcs]
    return polar_integral(ctx.Y, pieces, rho, config)


def hessian_entry(i: int, j: int, boundaries, problem, w, config: QuadConfig | None = None) -> float:
    """Off-diagonal Hessian entry ``H_ij`` (i != j, zero-based) as an arc-length integral.

    Uses the arcs of cell ``i`` that border cell ``j``; returns 0.0 when the
    cells are not adjacent.
    """
    from .trace import boundary_f_partials_v

    config = config or QuadConfig()
    if i == j:
        raise ValueError("hessian_entry is defined for i != j")
    bnd = boundaries[i]
    Y = problem.points[i]
    yj = problem.points[j]
    cost = problem.cost
    rho = problem.density
    arcs = [a for a in bnd.arcs if a.k == j + 1]
    if not arcs:
        return 0.0
    span = sum(a.theta_end - a.theta_start for a in bnd.arcs)
    total = 0.0
    for arc in arcs:
        share = (arc.theta_end - arc.theta_start) / span

        def integrand(th, arc=arc):
            r = arc.r_at(th)
            x1 = Y[0] + r * np.cos(th)
            x2 = Y[1] + r * np.sin(th)
            gi = cost.grad_v(x1 - Y[0], x2 - Y[1])
            gj = cost.grad_v(x1 - yj[0], x2 - yj[1])
            den = np.hypot(gi[0] - gj[0], gi[1] - gj[1])
            if np.any(den < 1e-13):
                raise GradientCoincidenceError(f"cost gradients coincide on the boundary of cells {i} and {j}")
            f_r, f_t = boundary_f_partials_v(r, th, Y, yj, cost)
            dr = -f_t / f_r
            return rho(x1, x2) / den * np.sqrt(r * r + dr * dr)

        total += adapt_simpson(integrand, arc.theta_start, arc.theta_end, config.scaled(share)).value
    return -total
