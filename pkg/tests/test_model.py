import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sdot2d.model import (
    Circle,
    CoincidentPointsError,
    CostFunction,
    Gaussian,
    Polygon,
    Problem,
    ProblemError,
    ProductPower,
    SmoothedStep,
    Square,
    TargetMeasure,
    Uniform,
    cost,
    grad_cost,
    validate_problem,
)
from sdot2d.presets import get_preset
from sdot2d.quad import QuadConfig, domain_integral

L2 = CostFunction.pnorm(2)
MIX24 = CostFunction(((0.5, 2.0), (0.5, 4.0)))

coord = st.floats(-3.0, 3.0, allow_nan=False)
point = st.tuples(coord, coord)
costs = st.sampled_from([
    CostFunction.pnorm(2),
    CostFunction.pnorm(3),
    CostFunction.pnorm(1.5),
    MIX24,
    CostFunction(((1.0, 3.0), (1.0, 5.0), (1.0, 7.0))),
    CostFunction.pnorm(32.0),
])


# -- cost ---------------------------------------------------------------------


def test_cost_euclidean_345():
    assert cost(L2, (0.0, 0.0), (3.0, 4.0)) == 5.0


def test_cost_mixture_on_axis_vector():
    assert cost(MIX24, (0.0, 0.0), (1.0, 0.0)) == pytest.approx(1.0, abs=1e-15)


def test_cost_identity_is_zero():
    assert cost(CostFunction.pnorm(3), (0.7, 0.2), (0.7, 0.2)) == 0.0


def test_grad_unit_radial():
    assert grad_cost(L2, (1.0, 0.0), (0.0, 0.0)) == pytest.approx((1.0, 0.0), abs=1e-15)


def _fd_grad(c, x, y, h=1e-6):
    gx = (cost(c, (x[0] + h, x[1]), y) - cost(c, (x[0] - h, x[1]), y)) / (2 * h)
    gy = (cost(c, (x[0], x[1] + h), y) - cost(c, (x[0], x[1] - h), y)) / (2 * h)
    return gx, gy


def test_grad_p4_diagonal():
    c = CostFunction.pnorm(4)
    g = grad_cost(c, (1.0, 1.0), (0.0, 0.0))
    assert g == pytest.approx((2**-0.75, 2**-0.75), rel=1e-14)
    assert g == pytest.approx(_fd_grad(c, (1.0, 1.0), (0.0, 0.0)), rel=1e-8)


def test_grad_mixture_diagonal():
    g = grad_cost(MIX24, (1.0, 1.0), (0.0, 0.0))
    v = 0.5 * (2**-0.5 + 2**-0.75)
    assert g == pytest.approx((v, v), rel=1e-14)
    assert g == pytest.approx(_fd_grad(MIX24, (1.0, 1.0), (0.0, 0.0)), rel=1e-8)


def test_grad_undefined_at_coincidence():
    with pytest.raises(CoincidentPointsError):
        grad_cost(L2, (0.3, 0.3), (0.3, 0.3))
    with pytest.raises(CoincidentPointsError):
        grad_cost(MIX24, (0.3, 0.3), (0.3, 0.3))


def test_vectorised_matches_scalar(rng):
    for c in (L2, MIX24, CostFunction.pnorm(1.25)):
        z = rng.normal(size=(50, 2))
        nv = c.norm_v(z[:, 0], z[:, 1])
        g1, g2 = c.grad_v(z[:, 0], z[:, 1])
        for m in range(50):
            assert nv[m] == pytest.approx(c.norm(*z[m]), rel=1e-14)
            assert (g1[m], g2[m]) == pytest.approx(c.grad(*z[m]), rel=1e-12, abs=1e-15)


@settings(max_examples=200, deadline=None)
@given(costs, point, point)
def test_cost_symmetry(c, x, y):
    assert abs(cost(c, x, y) - cost(c, y, x)) <= 1e-14 * max(1.0, cost(c, x, y))


@settings(max_examples=200, deadline=None)
@given(costs, point, point, point)
def test_cost_triangle_inequality(c, x, y, z):
    assert cost(c, x, y) <= cost(c, x, z) + cost(c, z, y) + 1e-12


@settings(max_examples=200, deadline=None)
@given(costs, point, point, st.floats(-10.0, 10.0, allow_nan=False))
def test_cost_homogeneity(c, x, y, t):
    lhs = cost(c, (t * x[0], t * x[1]), (t * y[0], t * y[1]))
    rhs = abs(t) * cost(c, x, y)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([L2, CostFunction.pnorm(3), MIX24, CostFunction(((1.0, 3.0), (1.0, 5.0), (1.0, 7.0)))]),
       point, point)
def test_grad_matches_finite_differences(c, x, y):
    z = (x[0] - y[0], x[1] - y[1])
    if math.hypot(*z) < 1e-3 or min(abs(z[0]), abs(z[1])) < 1e-3:
        # keep the coordinate kinks of the p-norm outside the FD stencil
        return
    g = np.array(grad_cost(c, x, y))
    fd = np.array(_fd_grad(c, x, y))
    assert np.max(np.abs(g - fd)) <= 1e-6 * max(1.0, np.max(np.abs(g)))


def test_cost_serialisation_round_trip():
    c = CostFunction(((1.0, 3.0), (0.25, 5.5)))
    assert CostFunction.from_list(c.to_list()) == c
    assert CostFunction.from_list([{"p": "inf"}]).terms == ((1.0, math.inf),)


# -- domains --------------------------------------------------------------------


def test_square_hit_and_branches():
    sq = Square(0.0, 1.0)
    assert sq.hit((0.25, 0.5), math.pi) == pytest.approx((0.25, -4))
    assert sq.hit((0.25, 0.5), 0.0) == pytest.approx((0.75, -2))
    assert sq.hit((0.25, 0.5), math.pi / 2) == pytest.approx((0.5, -3))
    assert sq.hit((0.25, 0.5), 3 * math.pi / 2) == pytest.approx((0.5, -1))


def test_square_corner_hit():
    r, k = Square(0.0, 1.0).hit((0.5, 0.5), math.pi / 4)
    assert r == pytest.approx(math.sqrt(2) / 2, rel=1e-14)
    assert k in (-2, -3)


def test_circle_hit_any_angle():
    c = Circle((0.0, 0.0), 1.0)
    for th in np.linspace(0, 2 * math.pi, 17):
        r, k = c.hit((0.0, 0.0), th)
        assert r == pytest.approx(1.0, abs=1e-15)
        assert k == -1


def test_polygon_branch_order_ccw_from_lowest():
    tri = Polygon([(0.5, 1.0), (1.0, 0.0), (0.0, 0.0)])
    # reordered counterclockwise starting at the lowest-then-leftmost vertex
    assert tri.vertices.tolist() == [[0.0, 0.0], [1.0, 0.0], [0.5, 1.0]]
    assert tri.hit((0.5, 0.3), -math.pi / 2)[1] == -1
    assert tri.area == pytest.approx(0.5)


def test_domain_violations():
    assert Square(1.0, 0.0).violations()
    assert Circle((0, 0), 0.0).violations()
    assert Polygon([(0, 0), (1, 0), (0.2, 0.2), (0, 1)]).violations()  # reflex vertex
    assert Polygon([(0, 0), (1, 0), (2, 0)]).violations()  # collinear
    assert not Polygon([(0, 0), (1, 0), (0, 1)]).violations()


# -- densities --------------------------------------------------------------------


@pytest.mark.parametrize("density", [
    Uniform(1.0), ProductPower(1), ProductPower(3), SmoothedStep(),
    Gaussian(Square(0.0, 1.0), (0.5, 0.5), 10.0),
])
def test_density_normalised_on_unit_square(density):
    total = domain_integral(Square(0.0, 1.0), density, QuadConfig(1e-12)).value
    assert total == pytest.approx(1.0, abs=1e-9)


def test_product_density_value():
    assert ProductPower(1)(0.5, 0.5) == pytest.approx(1.0)
    assert ProductPower(1)(1.0, 1.0) == pytest.approx(4.0)


def test_smoothed_step_is_nonnegative(rng):
    x = rng.uniform(0, 1, size=(2, 2000))
    assert np.all(SmoothedStep()(x[0], x[1]) >= 0.0)


def test_uniform_on_circle_normalises():
    c = Circle((0.0, 0.0), 1.0)
    assert domain_integral(c, Uniform(1.0 / c.area)).value == pytest.approx(1.0, abs=1e-9)


# -- targets and validation ---------------------------------------------------------


def test_target_measure_is_read_only():
    t = TargetMeasure.uniform([(0.1, 0.1), (0.5, 0.5)])
    with pytest.raises(ValueError):
        t.points[0, 0] = 0.3
    assert t.masses.tolist() == [0.5, 0.5]


def test_e1_preset_validates():
    assert validate_problem(get_preset("e1").problem) == []


def _pair(cost=L2, masses=(0.5, 0.5), pts=((0.25, 0.5), (0.75, 0.5)), density=None, domain=None):
    return Problem(domain or Square(0.0, 1.0), cost, density or Uniform(1.0), TargetMeasure(pts, masses))


def test_p_equal_one_rejected():
    v = validate_problem(_pair(cost=CostFunction.pnorm(1.0)))
    assert any("exponent outside (1,inf)" in x.message for x in v)


def test_p_infinity_rejected():
    v = validate_problem(_pair(cost=CostFunction.pnorm(math.inf)))
    assert any("exponent outside (1,inf)" in x.message for x in v)


def test_mass_sum_rejected():
    v = validate_problem(_pair(masses=(0.6, 0.6)))
    assert any("masses do not sum to 1" in x.message for x in v)


def test_one_violation_per_failure():
    p = _pair(cost=CostFunction(((1.0, 1.0), (-1.0, 2.0))), masses=(0.6, 0.6))
    codes = [x.code for x in validate_problem(p)]
    assert codes.count("cost") == 2
    assert codes.count("masses") == 1


def test_boundary_target_rejected():
    v = validate_problem(_pair(pts=((0.0, 0.5), (0.75, 0.5))))
    assert any("not strictly interior" in x.message for x in v)


def test_coincident_targets_rejected():
    v = validate_problem(_pair(pts=((0.5, 0.5), (0.5, 0.5))))
    assert any("pairwise distinct" in x.message for x in v)


def test_unnormalised_density_rejected():
    v = validate_problem(_pair(density=Uniform(2.0)))
    assert any(x.code == "density" for x in v)


def test_nonconvex_polygon_rejected():
    dom = Polygon([(0, 0), (1, 0), (0.4, 0.4), (0, 1)])
    v = validate_problem(_pair(domain=dom, pts=((0.1, 0.1), (0.2, 0.1))))
    assert any(x.code == "domain" for x in v)


def test_validate_raises_problem_error():
    with pytest.raises(ProblemError):
        _pair(masses=(0.6, 0.6)).validate()
