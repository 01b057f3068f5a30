import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from conftest import solved, symmetric_pair
from sdot2d.model import Circle, CostFunction, Problem, Square, TargetMeasure, Uniform
from sdot2d.presets import get_preset
from sdot2d.trace import (
    DELTA_MAX,
    TWO_PI,
    BadBracket,
    CellContext,
    bisect_r,
    bisect_theta,
    bound_bound,
    boundary_f,
    boundary_f_partials,
    curve_bound,
    domain_hit,
    pred_corr,
    shoot,
    trace_cell,
)


def pair_ctx(w=(0.0, 0.0), cost=None, i=0):
    return CellContext.for_cell(symmetric_pair(cost=cost), np.asarray(w, dtype=float), i)


def all_cells(problem, w):
    return [trace_cell(CellContext.for_cell(problem, w, i)) for i in range(problem.n)]


def member(problem, w, i, x, tol=1e-10):
    """Direct check of ``c(x, y_i) - w_i <= c(x, y_j) - w_j`` for all ``j``."""
    c = problem.cost
    pts = problem.points
    own = c.norm(x[0] - pts[i, 0], x[1] - pts[i, 1]) - w[i]
    return all(own <= c.norm(x[0] - pts[j, 0], x[1] - pts[j, 1]) - w[j] + tol
               for j in range(problem.n) if j != i)


# -- boundary function ----------------------------------------------------------------


def test_boundary_f_on_bisector_is_zero():
    assert boundary_f(0.25, 0.0, pair_ctx(), 2) == pytest.approx(0.0, abs=1e-16)


def test_boundary_f_at_centre():
    ctx = pair_ctx((0.1, -0.1))
    assert boundary_f(0.0, 1.3, ctx, 2) == pytest.approx(-0.1 - 0.1 - 0.5, abs=1e-15)


@pytest.mark.parametrize("frac", [0.5, 0.1, -0.3])
def test_boundary_f_vanishes_at_weighted_split_point(frac):
    # x0 = y1 + (k+1)/2 (y2 - y1) with k = (w1 - w2) / c(y1, y2) sits on the shared boundary
    c = CostFunction.pnorm(3)
    y1, y2 = np.array([0.2, 0.3]), np.array([0.7, 0.6])
    d = c.norm(*(y2 - y1))
    w = np.array([0.5 * frac * d, -0.5 * frac * d])
    p = Problem(Square(0.0, 1.0), c, Uniform(1.0), TargetMeasure.uniform([y1, y2]))
    ctx = CellContext.for_cell(p, w, 0)
    x0 = y1 + 0.5 * (frac + 1) * (y2 - y1)
    v = x0 - y1
    assert boundary_f(math.hypot(*v), math.atan2(v[1], v[0]), ctx, 2) == pytest.approx(0.0, abs=1e-14)


def test_partials_symmetric_axis_is_stationary():
    f_r, f_t = boundary_f_partials(0.25, 0.0, pair_ctx(), 2)
    assert f_t == pytest.approx(0.0, abs=1e-15)
    assert f_r > 0.0


@settings(max_examples=100, deadline=None)
@given(st.floats(0.05, 0.6), st.floats(0.0, TWO_PI),
       st.sampled_from([CostFunction.pnorm(2), CostFunction.pnorm(3), CostFunction(((0.5, 2.0), (0.5, 4.0)))]))
def test_partials_match_centred_differences(r, theta, cost):
    ctx = pair_ctx((0.05, -0.05), cost)
    x = (0.25 + r * math.cos(theta), 0.5 + r * math.sin(theta))
    if min(abs(x[0] - 0.75), abs(x[1] - 0.5)) < 1e-3:
        return  # keep the p-norm coordinate kinks out of the stencil
    f_r, f_t = boundary_f_partials(r, theta, ctx, 2)
    h = 1e-6
    fd_r = (boundary_f(r + h, theta, ctx, 2) - boundary_f(r - h, theta, ctx, 2)) / (2 * h)
    fd_t = (boundary_f(r, theta + h, ctx, 2) - boundary_f(r, theta - h, ctx, 2)) / (2 * h)
    assert f_r == pytest.approx(fd_r, rel=1e-5, abs=1e-8)
    assert f_t == pytest.approx(fd_t, rel=1e-5, abs=1e-8)


@pytest.mark.parametrize("cost", [CostFunction.pnorm(2), CostFunction.pnorm(4), CostFunction(((0.5, 2.0), (0.5, 4.0)))])
def test_even_p_gradient_floor(cost):
    p = symmetric_pair(cost=cost)
    w = np.array([0.05, -0.05])
    for i in range(2):
        ctx = CellContext.for_cell(p, w, i)
        for a in trace_cell(ctx).arcs:
            if a.k < 0:
                continue
            th = np.linspace(a.theta_start, a.theta_end, 200)
            r = a.r_at(th)
            f_r, f_t = ctx.partials_v(r, th, a.k)
            assert np.min(np.hypot(f_r, f_t)) >= 1e-10


# -- shooting and bisection -------------------------------------------------------------


def test_shoot_hits_bisector():
    r, k = shoot(0.0, pair_ctx())
    assert r == pytest.approx(0.25, abs=1e-13)
    assert k == 2


def test_shoot_hits_left_wall():
    r, k = shoot(math.pi, pair_ctx())
    assert r == pytest.approx(0.25, abs=1e-15)
    assert k == -4


def test_shoot_e1_diagonal_matches_root_finder():
    p = get_preset("e1").problem
    ctx = CellContext.for_cell(p, np.zeros(2), 0)
    u = np.array([math.cos(math.pi / 4), math.sin(math.pi / 4)])
    Y, y2 = p.points
    ref = brentq(lambda r: np.linalg.norm(Y + r * u - Y) - np.linalg.norm(Y + r * u - y2), 0.0, 1.0, xtol=1e-15)
    r, k = shoot(math.pi / 4, ctx)
    assert k == 2
    assert r == pytest.approx(ref, abs=1e-13)
    assert r == pytest.approx(0.375 / math.sqrt(2), abs=1e-13)  # bisector x1 + x2 = 5/8


def test_shoot_point_just_inside_is_member():
    p = symmetric_pair()
    ctx = pair_ctx()
    for theta in np.linspace(0.0, TWO_PI, 13):
        r, _ = shoot(float(theta), ctx)
        x = (0.25 + (r - 1e-9) * math.cos(theta), 0.5 + (r - 1e-9) * math.sin(theta))
        assert member(p, np.zeros(2), 0, x)


def test_bisect_r_bisector():
    assert bisect_r(0.0, 0.2, 0.3, pair_ctx(), 2) == pytest.approx(0.25, abs=1e-14)


def test_bisect_r_rejects_bad_bracket():
    with pytest.raises(BadBracket):
        bisect_r(0.0, 0.3, 0.4, pair_ctx(), 2)


def test_bisect_r_recovers_weighted_split_point():
    # w12 = c/2 puts the boundary at x0 = y1 + (3/4)(y2 - y1)
    ctx = pair_ctx((0.125, -0.125))
    assert bisect_r(0.0, 0.01, 0.49, ctx, 2) == pytest.approx(0.375, abs=1e-14)


def test_domain_hit_examples():
    assert domain_hit(math.pi, (0.25, 0.5), Square(0.0, 1.0)) == pytest.approx((0.25, -4))
    r, k = domain_hit(2.1, (0.0, 0.0), Circle((0.0, 0.0), 1.0))
    assert (r, k) == pytest.approx((1.0, -1))
    r, k = domain_hit(math.pi / 4, (0.5, 0.5), Square(0.0, 1.0))
    assert r == pytest.approx(math.sqrt(2) / 2, rel=1e-15)


# -- predictor-corrector ----------------------------------------------------------------


def test_pred_corr_follows_straight_bisector():
    r1, delta_new = pred_corr(0.25, 0.0, 0.05, pair_ctx(), 2)
    assert r1 == pytest.approx(0.25 / math.cos(0.05), abs=1e-14)
    assert 1e-6 <= delta_new <= DELTA_MAX


def test_pred_corr_exact_tangent_clamps_to_max():
    # on a straight line, the tangent predictor is exact to first order at theta = 0;
    # a tiny step leaves a predictor error below roundoff
    r1, delta_new = pred_corr(0.25, 0.0, 1e-9, pair_ctx(), 2)
    assert r1 == pytest.approx(0.25, abs=1e-15)
    assert delta_new == DELTA_MAX


def test_pred_corr_step_rule():
    # predictor error for the line r = 0.25 / cos(theta) at theta0 = 0 is 0.25 (1/cos(delta) - 1)
    delta = 0.05
    r1, delta_new = pred_corr(0.25, 0.0, delta, pair_ctx(), 2)
    err = 0.25 / math.cos(delta) - 0.25
    expect = min(DELTA_MAX, max(1e-6, 1e-3 / (2 * math.sqrt(err)) * delta))
    assert delta_new == pytest.approx(expect, rel=1e-6)


# -- breakpoints ----------------------------------------------------------------------


def test_bisect_theta_degenerate_interval_returns_start():
    assert bisect_theta(0.25, 0.0, 1e-15, pair_ctx(), 2) == (0.0, 0.25)


def test_curve_bound_bottom_and_top_walls():
    ctx = pair_ctx()
    t, r = curve_bound(-1, 4.8, 5.5, ctx, 2)
    assert t == pytest.approx(math.atan2(-0.5, 0.25) % TWO_PI, abs=1e-13)
    assert r == pytest.approx(math.hypot(0.25, 0.5), abs=1e-13)
    t, r = curve_bound(-3, 0.8, 1.5, ctx, 2)
    assert t == pytest.approx(math.atan2(0.5, 0.25), abs=1e-13)
    assert r == pytest.approx(math.hypot(0.25, 0.5), abs=1e-13)


def test_curve_bound_rejects_missing_sign_change():
    with pytest.raises(BadBracket):
        curve_bound(-1, 4.0, 4.5, pair_ctx(), 2)


def test_bound_bound_corners():
    sq = Square(0.0, 1.0)
    t, r = bound_bound(-4, -1, (0.25, 0.5), sq)
    assert t == pytest.approx(math.atan2(-0.5, -0.25) % TWO_PI, abs=1e-15)
    assert r == pytest.approx(math.hypot(0.25, 0.5), abs=1e-15)
    t, r = bound_bound(-2, -3, (0.25, 0.5), sq)
    assert t == pytest.approx(math.atan2(0.5, 0.75), abs=1e-15)
    assert r == pytest.approx(math.hypot(0.75, 0.5), abs=1e-15)


def test_e1_wall_breakpoints_match_independent_root():
    pre, w, _ = solved("e1")
    p = pre.problem
    b = trace_cell(CellContext.for_cell(p, w, 0))
    y1, y2 = p.points
    dw = w[0] - w[1]

    def on_wall(x):
        return np.linalg.norm(x - y1) - np.linalg.norm(x - y2) - dw

    bps = [q for q in b.breakpoints if 2 in (q.k_before, q.k_after)]
    assert len(bps) == 2
    for q in bps:
        x = np.array(y1) + q.r * np.array([math.cos(q.theta), math.sin(q.theta)])
        wall = q.k_after if q.k_before == 2 else q.k_before
        if wall in (-1, -3):  # horizontal wall: solve for x1
            x2 = 0.0 if wall == -1 else 1.0
            ref = brentq(lambda s: on_wall(np.array([s, x2])), 0.0, 1.0, xtol=1e-15)
            assert x[0] == pytest.approx(ref, abs=1e-9)
        else:
            x1 = 0.0 if wall == -4 else 1.0
            ref = brentq(lambda s: on_wall(np.array([x1, s])), 0.0, 1.0, xtol=1e-15)
            assert x[1] == pytest.approx(ref, abs=1e-9)


def test_three_cell_junction_flips_branch():
    pre, w, _ = solved("norms:p3")
    p = pre.problem
    for i in range(p.n):
        ctx = CellContext.for_cell(p, w, i)
        b = trace_cell(ctx)
        junctions = [q for q in b.breakpoints if q.k_before > 0 and q.k_after > 0]
        for q in junctions:
            _, k0 = shoot(q.theta - 1e-6, ctx)
            _, k1 = shoot(q.theta + 1e-6, ctx)
            assert (k0, k1) == (q.k_before, q.k_after)
        assert b.neighbors() == {j + 1 for j in range(p.n) if j != i}


# -- whole cells ----------------------------------------------------------------------


def test_symmetric_pair_cell_topology():
    b = trace_cell(pair_ctx())
    assert sorted(a.k for a in b.arcs) == [-4, -3, -1, 2]
    corners = sorted((round(0.25 + q.r * math.cos(q.theta), 12) + 0.0, round(0.5 + q.r * math.sin(q.theta), 12) + 0.0)
                     for q in b.breakpoints)
    assert corners == [(0.0, 0.0), (0.0, 1.0), (0.5, 0.0), (0.5, 1.0)]


def test_single_wall_branch_cell_in_circle():
    p = Problem(Circle((0.0, 0.0), 1.0), CostFunction.pnorm(2), Uniform(1.0 / math.pi),
                TargetMeasure.uniform([(-0.5, 0.0), (0.5, 0.0)]))
    b = trace_cell(CellContext.for_cell(p, np.zeros(2), 0))
    assert sorted(a.k for a in b.arcs) == [-1, 2]
    assert b.coverage == pytest.approx(TWO_PI, abs=1e-12)


def test_e1_voronoi_cell_matches_closed_form():
    # at w = 0 the cell of (1/8, 1/8) is cut by x1 + x2 = 5/8: r = (3/8) / (cos + sin)
    p = get_preset("e1").problem
    ctx = CellContext.for_cell(p, np.zeros(2), 0)
    b = trace_cell(ctx)
    for a in b.arcs:
        th = np.linspace(a.theta_start, a.theta_end, 500)
        r = a.r_at(th)
        thm = th % TWO_PI
        wall = np.array([p.domain.hit(ctx.Y, t)[0] for t in thm])
        s = np.cos(thm) + np.sin(thm)
        line = np.where(s > 0, 0.375 / np.where(s > 0, s, 1.0), np.inf)
        assert np.max(np.abs(r - np.minimum(wall, line))) <= 1e-12


PROPERTY_PRESETS = ["e1", "e2", "e3", "e4", "norms:p3", "norms:mix24"]


@pytest.mark.parametrize("name", PROPERTY_PRESETS)
def test_trace_invariants_at_solution(name):
    pre, w, _ = solved(name)
    p = pre.problem
    for i, b in enumerate(all_cells(p, w)):
        ctx = CellContext.for_cell(p, w, i)
        assert b.coverage == pytest.approx(TWO_PI, abs=1e-12)
        # consecutive arcs close up and differ in index
        for a0, a1 in zip(b.arcs, b.arcs[1:] + b.arcs[:1]):
            assert a0.k != a1.k
            gap = (a1.theta_start - a0.theta_end) % TWO_PI
            assert min(gap, TWO_PI - gap) <= 1e-12
        for q in b.breakpoints:
            assert q.k_before != q.k_after
        # curve samples satisfy F = 0
        for a in b.arcs:
            if a.k > 0:
                th = np.linspace(a.theta_start, a.theta_end, 64)
                v = ctx.f_v(a.r_at(th), th, a.k)
                assert np.max(np.abs(v)) <= 1e-13


@pytest.mark.parametrize("name", PROPERTY_PRESETS)
def test_reciprocity(name):
    pre, w, _ = solved(name)
    p = pre.problem
    cells = all_cells(p, w)
    checked = 0
    for i, b in enumerate(cells):
        for a in b.arcs:
            if a.k < 0:
                continue
            j = a.k - 1
            other = [o for o in cells[j].arcs if o.k == i + 1]
            assert other, f"cell {j} lacks an arc towards {i}"
            for x in a.points(0.02)[1:-1]:
                d = x - p.points[j]
                t = math.atan2(d[1], d[0]) % TWO_PI
                for o in other:
                    for tt in (t, t + TWO_PI):
                        if o.theta_start <= tt <= o.theta_end:
                            assert math.hypot(*d) == pytest.approx(o.r_at(tt), abs=1e-8)
                            checked += 1
    assert checked > 0


@pytest.mark.parametrize("name", PROPERTY_PRESETS)
def test_star_shaped_cells(name, rng):
    pre, w, _ = solved(name)
    p = pre.problem
    for i, b in enumerate(all_cells(p, w)):
        Y = np.array(b.Y)
        pts = b.polyline(0.05)
        for x, t in zip(pts, rng.uniform(0.0, 1.0, len(pts))):
            assert member(p, w, i, Y + t * (x - Y))
        # boundary samples themselves are members within tolerance
        for x in pts:
            assert member(p, w, i, x, 1e-8)
