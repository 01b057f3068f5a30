"""Polar boundary tracing of a single Laguerre cell.

A cell ``A(Y)`` is star-shaped about its target ``Y``, so its boundary is a
radial function ``r(theta)``.  Each smooth piece is either a level set
``F_j(r, theta) = 0`` shared with a neighbour ``j`` or a piece of the domain
boundary.  Branch indices follow one convention throughout: ``k = j >= 1`` is
the (1-based) neighbour cell, ``k <= -1`` a domain boundary branch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .model import CostFunction, Domain

__all__ = [
    "TraceError",
    "NoBoundaryFound",
    "BadBracket",
    "DegenerateTangency",
    "CorrectorDivergence",
    "DegenerateCellError",
    "CellContext",
    "Arc",
    "Breakpoint",
    "CellBoundary",
    "boundary_f",
    "boundary_f_partials",
    "boundary_f_partials_v",
    "shoot",
    "bisect_r",
    "domain_hit",
    "pred_corr",
    "bisect_theta",
    "curve_bound",
    "bound_bound",
    "trace_cell",
]

TWO_PI = 2.0 * math.pi
TOL = 1e-14
DELTA0 = TWO_PI / 360.0
DELTA_MIN = 1e-6
DELTA_MAX = math.pi / 16.0
WALL_CHECKS = 32
MAX_CORRECTOR = 25
MAX_SHOOT_HALVINGS = 60
MIN_ARC = 1e-13
RESTART_OFFSET = 1e-10
PROBE_MAX = 1e-9
EPS = float(np.finfo(float).eps)


class TraceError(RuntimeError):
    pass


class NoBoundaryFound(TraceError):
    pass


class BadBracket(TraceError, ValueError):
    pass


class DegenerateTangency(TraceError):
    pass


class CorrectorDivergence(TraceError):
    pass


class DegenerateCellError(TraceError):
    def __init__(self, index: int, message: str):
        self.index = index
        super().__init__(f"cell {index}: {message}")


@dataclass
class CellContext:
    """Everything needed to trace the cell of target ``index`` at weights ``w``."""

    Y: tuple[float, float]
    W: float
    points: np.ndarray
    weights: np.ndarray
    index: int
    cost: CostFunction
    domain: Domain
    tol: float = TOL

    def __post_init__(self):
        self.Y = (float(self.Y[0]), float(self.Y[1]))
        if not self.tol > 0:
            raise ValueError("tracing tolerance must be positive")
        # (k, z1, z2, dw) with z = Y - y_j and dw = w_j - W
        self._nb = []
        for j, (y, wj) in enumerate(zip(self.points, self.weights)):
            if j == self.index:
                continue
            z1, z2 = self.Y[0] - float(y[0]), self.Y[1] - float(y[1])
            if z1 == 0.0 and z2 == 0.0:
                raise ValueError(f"target {j} coincides with the cell centre")
            self._nb.append((j + 1, z1, z2, float(wj) - self.W))
        self._nb_by_k = {t[0]: t for t in self._nb}
        d = min(math.hypot(t[1], t[2]) for t in self._nb)
        self.shoot_step = min(self.cost.norm(t[1], t[2]) for t in self._nb) / 10.0
        self.min_dist = d

    @classmethod
    def for_cell(cls, problem, w, i: int, tol: float = TOL) -> "CellContext":
        return cls(tuple(problem.points[i]), float(w[i]), problem.points, np.asarray(w, dtype=float), i,
                   problem.cost, problem.domain, tol)

    @property
    def others(self):
        return [(self.points[k - 1], self.weights[k - 1]) for k, *_ in self._nb]

    @property
    def neighbor_ids(self) -> list[int]:
        return [t[0] for t in self._nb]

    # -- scalar evaluations -------------------------------------------------

    def f(self, r: float, theta: float, k: int) -> float:
        _, z1, z2, dw = self._nb_by_k[k]
        u1, u2 = math.cos(theta), math.sin(theta)
        x1, x2 = r * u1, r * u2
        return self.cost.norm(x1, x2) - self.cost.norm(x1 + z1, x2 + z2) + dw

    def f_all_max(self, r: float, theta: float, exclude: int = 0) -> tuple[float, int]:
        u1, u2 = math.cos(theta), math.sin(theta)
        x1, x2 = r * u1, r * u2
        c0 = self.cost.norm(x1, x2)
        best, kbest = -math.inf, 0
        for k, z1, z2, dw in self._nb:
            if k == exclude:
                continue
            v = c0 - self.cost.norm(x1 + z1, x2 + z2) + dw
            if v > best:
                best, kbest = v, k
        return best, kbest

    def inside(self, r: float, theta: float, exclude: int = 0) -> bool:
        """Membership of ``Y + r u(theta)`` in ``A(Y)``, ignoring branch ``exclude``."""
        u1, u2 = math.cos(theta), math.sin(theta)
        x1, x2 = r * u1, r * u2
        c0 = self.cost.norm(x1, x2)
        for k, z1, z2, dw in self._nb:
            if k != exclude and c0 - self.cost.norm(x1 + z1, x2 + z2) + dw > 0.0:
                return False
        if exclude >= 0:
            return self.domain.contains_point(self.Y[0] + x1, self.Y[1] + x2, 1e-14)
        return True

    def partials(self, r: float, theta: float, k: int) -> tuple[float, float]:
        _, z1, z2, _ = self._nb_by_k[k]
        u1, u2 = math.cos(theta), math.sin(theta)
        x1, x2 = r * u1, r * u2
        a1, a2 = self.cost.grad(x1, x2)
        b1, b2 = self.cost.grad(x1 + z1, x2 + z2)
        f_r = (a1 - b1) * u1 + (a2 - b2) * u2
        f_t = r * ((a1 - b1) * -u2 + (a2 - b2) * u1)
        return f_r, f_t

    # -- vectorised evaluations ---------------------------------------------

    def f_v(self, r, theta, k: int):
        _, z1, z2, dw = self._nb_by_k[k]
        x1 = r * np.cos(theta)
        x2 = r * np.sin(theta)
        return self.cost.norm_v(x1, x2) - self.cost.norm_v(x1 + z1, x2 + z2) + dw

    def f_noise_v(self, r, theta, k: int):
        """``F_k`` together with a bound on its rounding error."""
        _, z1, z2, dw = self._nb_by_k[k]
        x1 = r * np.cos(theta)
        x2 = r * np.sin(theta)
        c0 = self.cost.norm_v(x1, x2)
        c1 = self.cost.norm_v(x1 + z1, x2 + z2)
        return c0 - c1 + dw, 8.0 * EPS * (c0 + c1 + abs(dw))

    def f_max_v(self, r, theta, exclude: int = 0):
        x1 = r * np.cos(theta)
        x2 = r * np.sin(theta)
        c0 = self.cost.norm_v(x1, x2)
        out = np.full(np.shape(x1), -np.inf)
        for k, z1, z2, dw in self._nb:
            if k != exclude:
                out = np.maximum(out, c0 - self.cost.norm_v(x1 + z1, x2 + z2) + dw)
        return out

    def partials_v(self, r, theta, k: int):
        _, z1, z2, _ = self._nb_by_k[k]
        return boundary_f_partials_v(r, theta, self.Y, (self.Y[0] - z1, self.Y[1] - z2), self.cost)


def boundary_f_partials_v(r, theta, Y, yj, cost: CostFunction):
    """Vectorised ``(F_r, F_theta)``; independent of the weights."""
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u1, u2 = np.cos(theta), np.sin(theta)
    x1, x2 = r * u1, r * u2
    z1, z2 = Y[0] - yj[0], Y[1] - yj[1]
    a1, a2 = cost.grad_v(x1, x2)
    b1, b2 = cost.grad_v(x1 + z1, x2 + z2)
    f_r = (a1 - b1) * u1 + (a2 - b2) * u2
    f_t = r * ((a1 - b1) * -u2 + (a2 - b2) * u1)
    return f_r, f_t


# ---------------------------------------------------------------------------
# elementary operations


def boundary_f(r: float, theta: float, ctx: CellContext, j: int) -> float:
    """``c(rU) - c(rU + Y - y_j) + w_j - W``; negative inside ``A(Y)`` w.r.t. ``j``."""
    return ctx.f(r, theta, j)


def boundary_f_partials(r: float, theta: float, ctx: CellContext, j: int) -> tuple[float, float]:
    f_r, f_t = ctx.partials(r, theta, j)
    if abs(f_r) < 1e-13:
        raise DegenerateTangency(f"F_r = {f_r:.3e} at r={r}, theta={theta}")
    return f_r, f_t


def domain_hit(theta: float, Y, domain: Domain) -> tuple[float, int]:
    return domain.hit(Y, theta)


def bisect_r(theta0: float, r_lo: float, r_hi: float, ctx: CellContext, j: int) -> float:
    """Bisection on ``F_j(., theta0)`` over a sign-changing bracket."""
    if not (ctx.f(r_lo, theta0, j) < 0.0 < ctx.f(r_hi, theta0, j)):
        raise BadBracket(f"no sign change of F on [{r_lo}, {r_hi}]")
    tol = ctx.tol
    while r_hi - r_lo >= tol:
        r = 0.5 * (r_lo + r_hi)
        if r == r_lo or r == r_hi:
            break
        v = ctx.f(r, theta0, j)
        if v < 0.0:
            r_lo = r
        elif v > 0.0:
            r_hi = r
        else:
            return r
    return 0.5 * (r_lo + r_hi)


def _inside_below(r: float, theta: float, ctx: CellContext) -> bool:
    """Membership just inside radius ``r``.

    The probe starts at ``r - tol`` and backs off by factors of 10 up to
    ``PROBE_MAX * r``: where the ray meets a boundary at a shallow angle, the
    rounding noise of ``F`` shifts its numerical zero by more than ``tol``.
    """
    off = ctx.tol
    limit = max(PROBE_MAX * r, ctx.tol)
    while off <= limit:
        if ctx.inside(r - off, theta):
            return True
        off *= 10.0
    return False


def shoot(theta0: float, ctx: CellContext) -> tuple[float, int]:
    """March along the ray from ``Y`` until leaving ``A(Y)`` or ``Omega``; return ``(r, k)``."""
    tol = ctx.tol
    if ctx.f_all_max(0.0, theta0)[0] >= 0.0:
        raise NoBoundaryFound("target lies outside its own cell (weights infeasible)")
    r_wall, k_wall = ctx.domain.hit(ctx.Y, theta0)
    d = ctx.shoot_step
    r0 = 0.0
    halvings = 0
    while d >= tol and halvings <= MAX_SHOOT_HALVINGS:
        r0 += d
        r_test = min(r0, r_wall)
        hits = [k for k, *_ in ctx._nb if ctx.f(r_test, theta0, k) > 0.0]
        if hits:
            lo = r0 - d
            best_r, best_k = math.inf, 0
            for k in hits:
                try:
                    rk = bisect_r(theta0, lo, r_test, ctx, k)
                except BadBracket:
                    rk = lo if ctx.f(lo, theta0, k) >= 0.0 else r_test
                if rk < best_r:
                    best_r, best_k = rk, k
            if _inside_below(best_r, theta0, ctx):
                return best_r, best_k
        elif r0 >= r_wall:
            if _inside_below(r_wall, theta0, ctx):
                return r_wall, k_wall
        else:
            continue
        # failed acceptance probe: retreat and refine the march
        r0 -= d
        d *= 0.5
        halvings += 1
    raise NoBoundaryFound(f"shooting step underflow at theta={theta0}")


def pred_corr(r0: float, theta0: float, delta: float, ctx: CellContext, j: int) -> tuple[float, float]:
    """Tangent predictor plus Newton corrector along ``F_j = 0``; returns ``(r1, delta_new)``."""
    f_r, f_t = boundary_f_partials(r0, theta0, ctx, j)
    r_pred = r0 - delta * f_t / f_r
    r1 = r_pred
    theta1 = theta0 + delta
    tol = ctx.tol
    for _ in range(MAX_CORRECTOR):
        if not (r1 > 0.0 and math.isfinite(r1)):
            raise CorrectorDivergence(f"corrector left r > 0 at theta={theta1}")
        v = ctx.f(r1, theta1, j)
        if abs(v) < tol:
            break
        fr, _ = ctx.partials(r1, theta1, j)
        if fr <= 0.0:
            raise CorrectorDivergence("F_r vanished in the corrector")
        step = v / fr
        r1 -= step
        if abs(step) <= 4e-16 * r1:
            break
    else:
        raise CorrectorDivergence(f"corrector did not converge at theta={theta1}")
    if not (r1 > 0.0 and math.isfinite(r1)):
        raise CorrectorDivergence(f"corrector left r > 0 at theta={theta1}")
    err = abs(r1 - r_pred)
    if err == 0.0:
        delta_new = DELTA_MAX
    else:
        delta_new = 1e-3 / (2.0 * math.sqrt(err)) * abs(delta)
        delta_new = min(DELTA_MAX, max(DELTA_MIN, delta_new))
    return r1, delta_new


def _solve_r(ctx: CellContext, theta: float, k: int, guess: float) -> float:
    """Root of ``F_k(., theta)`` near ``guess`` (Newton, then bracketing)."""
    r = guess
    for _ in range(50):
        v, noise = ctx.f_noise_v(r, theta, k)
        if abs(v) <= noise and r > 0.0:
            return float(r)
        fr, _ = ctx.partials(r, theta, k)
        if fr <= 0.0:
            break
        step = float(v) / fr
        r -= step
        if not (r > 0.0):
            break
        if abs(step) <= 1e-12 * r:
            return r
    hi = max(guess, ctx.tol)
    for _ in range(200):
        if ctx.f(hi, theta, k) > 0.0:
            break
        hi *= 2.0
    else:
        raise NoBoundaryFound(f"branch {k} has no root at theta={theta}")
    return brentq(lambda s: ctx.f(s, theta, k), 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)


def bisect_theta(r0: float, theta0: float, theta1: float, ctx: CellContext, j: int) -> tuple[float, float]:
    """Bisection in ``theta`` following ``F_j = 0`` with :func:`pred_corr` until membership flips."""
    tol = ctx.tol
    while theta1 - theta0 >= tol:
        theta = 0.5 * (theta0 + theta1)
        try:
            r, _ = pred_corr(r0, theta0, theta - theta0, ctx, j)
        except (CorrectorDivergence, DegenerateTangency):
            r = _solve_r(ctx, theta, j, r0)
        if ctx.inside(r, theta, exclude=j):
            theta0, r0 = theta, r
        else:
            theta1 = theta
    return theta0, r0


def curve_bound(k_wall: int, theta0: float, theta1: float, ctx: CellContext, j: int) -> tuple[float, float]:
    """Angle where the level set ``F_j = 0`` meets domain branch ``k_wall`` inside ``[theta0, theta1]``."""
    dom = ctx.domain

    def g(t):
        r = dom.wall_radius(k_wall, ctx.Y, t)
        if not math.isfinite(r):
            return math.inf
        return ctx.f(r, t, j)

    g0, g1 = g(theta0), g(theta1)
    if not (math.isfinite(g0) and math.isfinite(g1)) or g0 * g1 > 0.0:
        raise BadBracket(f"F does not change sign along branch {k_wall} on [{theta0}, {theta1}]")
    if g0 == 0.0:
        t = theta0
    elif g1 == 0.0:
        t = theta1
    else:
        t = brentq(g, theta0, theta1, xtol=ctx.tol, rtol=4 * np.finfo(float).eps)
    return t, float(dom.wall_radius(k_wall, ctx.Y, t))


def bound_bound(k1: int, k2: int, Y, domain: Domain) -> tuple[float, float]:
    """Shared corner of two adjacent domain branches in polar form about ``Y``."""
    x = domain.corner(k1, k2)
    dx, dy = x[0] - Y[0], x[1] - Y[1]
    return math.atan2(dy, dx) % TWO_PI, math.hypot(dx, dy)


# ---------------------------------------------------------------------------
# boundary representation


@dataclass
class Arc:
    """Smooth boundary piece over the unwrapped interval ``[theta_start, theta_end]``."""

    k: int
    theta_start: float
    theta_end: float
    thetas: np.ndarray
    radii: np.ndarray
    ctx: CellContext = field(repr=False, compare=False)

    @property
    def index(self) -> int:
        return self.k

    @property
    def wraps(self) -> bool:
        return self.theta_end > TWO_PI

    @property
    def r_start(self) -> float:
        return float(self.radii[0])

    @property
    def r_end(self) -> float:
        return float(self.radii[-1])

    def r_at(self, theta):
        """Boundary radius along this arc (vectorised)."""
        scalar = np.ndim(theta) == 0
        th = np.atleast_1d(np.asarray(theta, dtype=float))
        if self.k < 0:
            r = np.asarray(self.ctx.domain.wall_radius(self.k, self.ctx.Y, th), dtype=float)
        else:
            r = self._solve_curve(th)
        return float(r[0]) if scalar else r

    def _solve_curve(self, th: np.ndarray) -> np.ndarray:
        ctx = self.ctx
        r = np.interp(th, self.thetas, self.radii)
        done = np.zeros(th.shape, dtype=bool)
        for _ in range(40):
            v, noise = ctx.f_noise_v(r, th, self.k)
            f_r, _ = ctx.partials_v(r, th, self.k)
            good = f_r > 0
            at_root = np.abs(v) <= noise
            step = np.where(good & ~at_root, v / np.where(good, f_r, 1.0), 0.0)
            r = r - step
            # quadratic convergence: after a step this small the error is at roundoff level
            done = good & (at_root | (np.abs(step) <= 1e-12 * np.abs(r)))
            if np.all(done):
                break
        bad = ~(done & (r > 0))
        for m in np.nonzero(bad)[0]:
            r[m] = _solve_r(ctx, float(th[m]), self.k, float(np.interp(th[m], self.thetas, self.radii)))
        return r

    def points(self, max_step: float = 0.01) -> np.ndarray:
        n = max(2, int(math.ceil((self.theta_end - self.theta_start) / max_step)) + 1)
        th = np.linspace(self.theta_start, self.theta_end, n)
        r = self.r_at(th)
        return np.column_stack([self.ctx.Y[0] + r * np.cos(th), self.ctx.Y[1] + r * np.sin(th)])


@dataclass(frozen=True)
class Breakpoint:
    theta: float
    r: float
    k_before: int
    k_after: int


@dataclass
class CellBoundary:
    index: int
    Y: tuple[float, float]
    arcs: list[Arc]
    breakpoints: list[Breakpoint]

    @property
    def coverage(self) -> float:
        return sum(a.theta_end - a.theta_start for a in self.arcs)

    def neighbors(self) -> set[int]:
        return {a.k for a in self.arcs if a.k > 0}

    def polyline(self, max_step: float = 0.01) -> np.ndarray:
        pts = [a.points(max_step)[:-1] for a in self.arcs]
        pts.append(self.arcs[-1].points(max_step)[-1:])
        return np.vstack(pts)


# ---------------------------------------------------------------------------
# the tracer


class _Tracer:
    def __init__(self, ctx: CellContext):
        self.ctx = ctx
        self.arcs: list[Arc] = []
        self.breakpoints: list[Breakpoint] = []

    # stepping -----------------------------------------------------------------

    def _advance(self, theta, r, k, theta_n, delta):
        """Try one step; return ``(ok, r_new, delta_new, theta_fail)``."""
        ctx = self.ctx
        if k > 0:
            try:
                r_new, delta_new = pred_corr(r, theta, theta_n - theta, ctx, k)
            except (CorrectorDivergence, DegenerateTangency):
                return False, None, delta, theta_n
            if ctx.inside(r_new, theta_n, exclude=k):
                return True, r_new, delta_new, theta_n
            return False, None, delta, theta_n
        # wall branch: closed form, checked at interior samples for intrusions
        ts = np.linspace(theta, theta_n, WALL_CHECKS + 1)[1:]
        rk = np.asarray(ctx.domain.wall_radius(k, ctx.Y, ts), dtype=float)
        ok = np.isfinite(rk)
        r_hit = np.array([ctx.domain.hit(ctx.Y, t)[0] for t in ts])
        ok &= rk <= r_hit * (1.0 + 1e-13)
        with np.errstate(invalid="ignore"):
            ok &= ctx.f_max_v(np.where(np.isfinite(rk), rk, 0.0), ts) <= 0.0
        if np.all(ok):
            return True, float(rk[-1]), delta, theta_n
        first = int(np.argmin(ok))
        return False, None, delta, float(ts[first])

    def _branch_at(self, theta):
        return shoot(theta % TWO_PI, self.ctx)

    def _radius_on(self, k, theta, guess):
        if k < 0:
            r = self.ctx.domain.wall_radius(k, self.ctx.Y, theta)
            return float(r) if math.isfinite(r) else guess
        try:
            return _solve_r(self.ctx, theta, k, guess)
        except TraceError:
            return guess

    def _generic_bisect(self, theta_a, r_a, k, theta_b):
        """Membership bisection: largest angle in ``[theta_a, theta_b]`` still on branch ``k``."""
        tol = self.ctx.tol
        while theta_b - theta_a >= tol:
            mid = 0.5 * (theta_a + theta_b)
            r_m, k_m = self._branch_at(mid)
            if k_m == k:
                theta_a, r_a = mid, r_m
            else:
                theta_b = mid
        return theta_a, self._radius_on(k, theta_a, r_a)

    def _verified(self, theta, r, k, k_new, theta_a, theta_b):
        if not (theta_a <= theta <= theta_b) or not (r > 0 and math.isfinite(r)):
            return False
        ctx = self.ctx
        u1, u2 = math.cos(theta), math.sin(theta)
        x = (ctx.Y[0] + r * u1, ctx.Y[1] + r * u2)
        if not ctx.domain.contains_point(x[0], x[1], 1e-12):
            return False
        excl = {k, k_new}
        for kk, *_ in ctx._nb:
            if kk not in excl and ctx.f(r, theta, kk) > 1e-12:
                return False
        return True

    def _locate(self, theta_a, r_a, k, theta_b, k_new):
        ctx = self.ctx
        try:
            if k > 0 and k_new > 0:
                t, r = bisect_theta(r_a, theta_a, theta_b, ctx, k)
            elif k > 0:
                t, r = curve_bound(k_new, theta_a, theta_b, ctx, k)
            elif k_new > 0:
                t, r = curve_bound(k, theta_a, theta_b, ctx, k_new)
            else:
                t, r = bound_bound(k, k_new, ctx.Y, ctx.domain)
                t += TWO_PI * math.floor((theta_a - t) / TWO_PI + 1.0)
                if t > theta_b + 1e-12:
                    t -= TWO_PI
                t = min(max(t, theta_a), theta_b)
            if self._verified(t, r, k, k_new, theta_a - 1e-12, theta_b + 1e-12):
                return t, r
        except (TraceError, ValueError):
            pass
        return self._generic_bisect(theta_a, r_a, k, theta_b)

    # main loop ------------------------------------------------------------------

    def run(self) -> CellBoundary:
        ctx = self.ctx
        try:
            r, k = shoot(0.0, ctx)
        except NoBoundaryFound as exc:
            raise DegenerateCellError(ctx.index, str(exc)) from exc
        theta = 0.0
        delta = DELTA0
        cur_k, cur_start = k, 0.0
        th_s, r_s = [0.0], [r]
        steps = 0
        while theta < TWO_PI:
            steps += 1
            if steps > 2_000_000:
                raise DegenerateCellError(ctx.index, "tracing did not close")
            step = delta if k > 0 else DELTA_MAX
            theta_n = min(theta + step, TWO_PI)
            ok, r_new, delta_new, theta_fail = self._advance(theta, r, k, theta_n, delta)
            if ok:
                theta, r, delta = theta_n, r_new, delta_new
                th_s.append(theta)
                r_s.append(r)
                continue
            try:
                r_b, k_b = self._branch_at(theta_fail)
            except NoBoundaryFound as exc:
                raise DegenerateCellError(ctx.index, str(exc)) from exc
            if k_b == k:
                # the step failed but the branch did not change: resume from the shot point
                theta, r = theta_fail, r_b
                delta = max(0.5 * delta, DELTA_MIN)
                th_s.append(theta)
                r_s.append(r)
                continue
            theta_a, r_a = theta, r
            if theta == cur_start and self.arcs:
                # still on the breakpoint that opened this arc: search past it so a
                # branch that re-crosses the same curve is not located at its start
                theta_a = theta + min(RESTART_OFFSET, 0.5 * (theta_fail - theta))
                r_a = self._radius_on(k, theta_a, r)
            t_star, r_star = self._locate(theta_a, r_a, k, theta_fail, k_b)
            # branch that follows the breakpoint
            gap = theta_fail - t_star
            if gap > 2 * ctx.tol:
                try:
                    _, k_next = self._branch_at(t_star + min(RESTART_OFFSET, 0.5 * gap))
                except NoBoundaryFound:
                    k_next = k_b
                if k_next == k:
                    k_next = k_b
            else:
                k_next = k_b
            th_s.append(t_star)
            r_s.append(r_star)
            if t_star - cur_start >= MIN_ARC:
                self._close(cur_k, cur_start, t_star, th_s, r_s)
                self.breakpoints.append(Breakpoint(t_star % TWO_PI, r_star, k, k_next))
                cur_start = t_star
                th_s, r_s = [], []
            elif self.arcs and self.arcs[-1].k == k_next:
                # a vanishing arc between two pieces of the same branch: reopen the previous arc
                prev = self.arcs.pop()
                self.breakpoints.pop()
                cur_start = prev.theta_start
                th_s, r_s = list(prev.thetas), list(prev.radii)
            else:
                th_s, r_s = [], []
                if self.breakpoints:
                    bp = self.breakpoints.pop()
                    self.breakpoints.append(Breakpoint(bp.theta, bp.r, bp.k_before, k_next))
            k = cur_k = k_next
            theta = t_star
            r = self._radius_on(k, t_star, r_star)
            th_s.append(theta)
            r_s.append(r)
            delta = DELTA0
        self._close(cur_k, cur_start, TWO_PI, th_s, r_s)
        return self._finish()

    def _close(self, k, start, end, th_s, r_s):
        th = np.asarray(th_s, dtype=float)
        rr = np.asarray(r_s, dtype=float)
        # keep samples strictly increasing for interpolation
        keep = np.concatenate([[True], np.diff(th) > 0])
        th, rr = th[keep], rr[keep]
        if len(th) == 1:
            th = np.array([start, end])
            rr = np.array([rr[0], rr[0]])
        if end - start < MIN_ARC and self.arcs:
            last = self.arcs[-1]
            last.theta_end = end
            return
        self.arcs.append(Arc(k, start, end, th, rr, self.ctx))

    def _finish(self) -> CellBoundary:
        arcs = self.arcs
        bps = self.breakpoints
        if len(arcs) > 1 and arcs[0].k == arcs[-1].k:
            first, last = arcs[0], arcs[-1]
            th = np.concatenate([last.thetas, first.thetas[1:] + TWO_PI])
            rr = np.concatenate([last.radii, first.radii[1:]])
            keep = np.concatenate([[True], np.diff(th) > 0])
            merged = Arc(last.k, last.theta_start, first.theta_end + TWO_PI, th[keep], rr[keep], self.ctx)
            arcs = arcs[1:-1] + [merged]
        elif len(arcs) > 1:
            bps = bps + [Breakpoint(0.0, arcs[0].r_start, arcs[-1].k, arcs[0].k)]
        return CellBoundary(self.ctx.index, self.ctx.Y, arcs, bps)


def trace_cell(ctx: CellContext) -> CellBoundary:
    """Trace ``A(Y)`` as an ordered list of smooth arcs covering a full turn."""
    return _Tracer(ctx).run()
