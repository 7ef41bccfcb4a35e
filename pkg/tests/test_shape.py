import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from leaky_asm import krw, shape
from leaky_asm.sandpile import ToppleRule

SQ2 = math.sqrt(2)


# -- saddle ----------------------------------------------------------------------

def test_saddle_axis_example():
    sd = shape.saddle(0, 2)
    assert sd.w_plus == 1
    assert sd.z_cr == pytest.approx(3 + 2 * SQ2, rel=1e-15)
    assert sd.S_cr == pytest.approx(-math.log(3 + 2 * SQ2), rel=1e-15)
    assert sd.S_cr == pytest.approx(-1.7627, abs=5e-5)


def test_saddle_diagonal_example():
    sd = shape.saddle(1, 2)
    assert sd.w_plus == pytest.approx(2 + math.sqrt(3), rel=1e-15)
    assert sd.w_minus == 0


def test_saddle_rejects_bad_slope():
    with pytest.raises(ValueError):
        shape.saddle(1.5, 2)
    with pytest.raises(ValueError):
        shape.saddle(0.5, 1)


D_GRID = np.concatenate([1 + np.logspace(-4, 0, 10), np.logspace(0.5, 4, 10)])
A_GRID = np.linspace(0, 1, 20)


@pytest.mark.parametrize("d", D_GRID)
def test_saddle_grid_invariants(d):
    ws = []
    for a in A_GRID:
        sd = shape.saddle(a, d)
        assert abs(sd.residual()) < 1e-10
        assert sd.S_pp > 0
        # w_minus = -1 exactly on the axis, where the critical equation is w = 1/w
        assert (-1 < sd.w_minus or a == 0) and sd.w_minus >= -1
        assert sd.w_minus <= 0 < 1 <= sd.w_plus <= (d + math.sqrt(d * d - 1)) * (1 + 1e-14)
        assert sd.S_cr <= -math.log(d + math.sqrt(d * d - 1)) * (1 - 1e-12) < 0
        assert sd.G_cr > 0 and sd.z_cr > 1
        ws.append(sd.w_plus)
    assert np.all(np.diff(ws) > 0)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(0, 1), d=st.floats(1.0001, 1e4))
def test_boundedness_inequalities(a, d):
    w = shape.saddle(a, d).w_plus
    v = 4 * d - w - 1 / w
    tol = 1e-12 * d
    assert 2 * d - tol <= v <= 4 * d - 2 + tol
    s2 = (v - 2) * (v + 2)
    assert 4 * (d * d - 1) * (1 - 1e-12) <= s2 <= 16 * d * (d - 1) * (1 + 1e-12)


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 0.99), d=st.floats(1.01, 100))
def test_saddle_is_stationary_and_second_derivative(a, d):
    sd = shape.saddle(a, d)
    w, h = sd.w_plus, 1e-4 * sd.w_plus

    def S(x):
        return shape.S_of_w(x, a, d).real

    assert abs((S(w + h) - S(w - h)) / (2 * h)) < 1e-6 * max(1, abs(sd.S_cr))
    fd2 = (S(w + h) - 2 * S(w) + S(w - h)) / h ** 2
    assert fd2 == pytest.approx(sd.S_pp, rel=1e-4)
    assert S(w) == pytest.approx(sd.S_cr, rel=1e-13)
    assert shape.G_of_w(w, d).real == pytest.approx(sd.G_cr, rel=1e-13)


# -- asymptotic death probability ------------------------------------------------

def test_pd_asymptotic_vs_dp_axis():
    fld = krw.death_prob_dp(ToppleRule.uniform(2), tail_eps=1e-40)
    err = abs(math.exp(shape.pd_asymptotic(40, 0, 2) - fld.log_at(40, 0)) - 1)
    assert err < 0.05


def test_pd_asymptotic_vs_contour_r200():
    lp = krw.death_prob_contour(200, Fraction(1, 2), 2)
    assert abs(math.exp(shape.pd_asymptotic(200, 0.5, 2) - lp) - 1) < 0.02


@pytest.mark.parametrize("a,d", [(0, 2), (Fraction(1, 2), 2), (Fraction(1, 4), 1.5),
                                 (1, 5)])
def test_pd_asymptotic_error_decreases(a, d):
    errs = [abs(math.exp(shape.pd_asymptotic(r, float(a), d)
                         - krw.death_prob_contour(r, a, d)) - 1) for r in (40, 80, 160, 320)]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))


def test_pd_asymptotic_rejects_nonpositive_r():
    with pytest.raises(ValueError):
        shape.pd_asymptotic(0, 0.5, 2)


# -- limit curves ----------------------------------------------------------------

def test_limit_curve_axis_point():
    lc = shape.limit_curve(2, 65)
    assert lc.x[0] == pytest.approx(1 / math.log(3 + 2 * SQ2), rel=1e-14)
    assert lc.x[0] == pytest.approx(0.56733, abs=5e-5)
    assert lc.y[0] == 0


@pytest.mark.parametrize("d", [1.001, 1.5, 2, 30, 1e5])
def test_limit_curve_closed_convex_and_slopes(d):
    lc = shape.limit_curve(d, 257)
    poly = lc.closed
    assert np.allclose(poly[0], poly[-1])
    e = np.diff(poly, axis=0)
    cross = e[:-1, 0] * e[1:, 1] - e[:-1, 1] * e[1:, 0]
    assert np.all(cross >= -1e-12)
    # vertical tangent at a = 0 and slope -1 at the diagonal
    # x(a) is even in a, so dx/dy vanishes linearly as a -> 0
    dxdy = [(shape.limit_curve(d, 2).x[0] + 1 / shape.saddle(h, d).S_cr) / (-h / shape.saddle(
        h, d).S_cr) for h in (1e-4 / d, 1e-6 / d)]
    assert abs(dxdy[1]) < 2e-2 * abs(dxdy[0]) + 1e-9
    slope = (lc.y[-1] - lc.y[-2]) / (lc.x[-1] - lc.x[-2])
    assert slope == pytest.approx(-1, abs=0.02)


def test_limit_curve_regimes():
    assert shape.limit_curve(1.0001, 129).sup_distance("circle") < 0.01
    assert shape.limit_curve(1e6, 129).sup_distance("l1") < shape.limit_curve(
        1e3, 129).sup_distance("l1")


def test_limit_curve_rejects_bad_args():
    with pytest.raises(ValueError):
        shape.limit_curve(2, 1)
    with pytest.raises(ValueError):
        shape.limit_curve(1.0, 5)


def test_ne_curve_examples():
    lc = shape.ne_curve(2, 65)
    assert lc.x[0] == pytest.approx(1 / math.log(4), rel=1e-14)
    assert lc.x[0] == pytest.approx(0.72135, abs=5e-6)
    for d in (1.5, 2, 9):
        c = shape.ne_curve(d, 9)
        assert c.x[-1] == pytest.approx(1 / (2 * math.log(d)), rel=1e-13)
        assert c.y[-1] == pytest.approx(c.x[-1], rel=1e-15)


def test_ne_curve_approaches_triangle():
    gaps = [shape.ne_curve(d, 129).sup_distance("triangle") for d in (10, 1e3, 1e6)]
    assert gaps[0] > gaps[1] > gaps[2]


@pytest.mark.parametrize("d", [1.01, 1.5, 2, 10, 1e3])
@pytest.mark.parametrize("a", [0, Fraction(1, 10), Fraction(1, 4), Fraction(1, 2), 1])
def test_ne_log_probability_rate(d, a):
    # log P(r, a r) / r -> g(a); the binomial prefactor gives a (1/2) log r / r correction
    g = float(shape.ne_g(float(a), d))
    for r in (40, 200, 1000, 5000):
        k = int(a * r)
        err = abs(krw.death_prob_ne(r, k, d, log=True) / r - g)
        assert err <= (0.5 * math.log(r) + abs(math.log(1 - 1 / d)) + 2) / r


# -- radii -----------------------------------------------------------------------

def test_scale_length():
    L = math.log(1e20)
    assert shape.scale_length(1e20, "logn") == L
    assert shape.scale_length(1e20) == pytest.approx(L - 0.5 * math.log(L))
    with pytest.raises(ValueError):
        shape.scale_length(1e20, "sqrt")


@pytest.mark.parametrize("d", [1.2, 2, 7])
def test_band_width_constant(d):
    band = shape.radial_band(1e30, d, [0, 0.3, 1])
    S = np.array([shape.saddle(a, d).S_cr for a in band.a])
    assert np.allclose(band.width, math.log(d / (d - 1)) / np.abs(S), rtol=1e-12)
    assert np.all(band.r_inner <= band.r_outer)


def test_band_width_example():
    band = shape.radial_band(1e20, 2, [0])
    assert band.width[0] == pytest.approx(math.log(2) / 1.76275, abs=5e-5)
    assert band.width[0] == pytest.approx(0.3932, abs=5e-5)


def test_band_leading_term():
    ratios = [shape.radial_band(n, 2, [0]).r_outer[0] / math.log(n) for n in
              (1e10, 1e30, 1e100, 1e300)]
    target = 1 / math.log(3 + 2 * SQ2)
    gaps = [abs(r - target) for r in ratios]
    assert all(g2 < g1 for g1, g2 in zip(gaps, gaps[1:]))


def test_band_contains_certified_visited_sites():
    n, d = 1e20, 2.0
    fld = krw.death_prob_dp(ToppleRule.uniform(d), tail_eps=1e-40)
    certified = fld.log_p >= math.log(4 * d / n)
    R = fld.radius
    xs, ys = np.nonzero(certified)
    x, y = np.abs(xs - R), np.abs(ys - R)
    big, small = np.maximum(x, y), np.minimum(x, y)
    band = shape.radial_band(n, d, small / np.maximum(big, 1))
    assert np.all(big <= band.r_outer + 1)


def test_exact_radii_near_band():
    ri, ro = shape.exact_radii(1e20, 2, 0)
    band = shape.radial_band(1e20, 2, [0])
    assert ri < ro
    assert ro == pytest.approx(band.r_outer[0], abs=0.5)
    assert ri == pytest.approx(band.r_inner[0], abs=0.5)


# -- vanishing leakiness ---------------------------------------------------------

def test_leak_band_outer_circle():
    band = shape.leak_to_zero_band(1e12, 1e-3)
    assert np.allclose(band.scaled_outer(), 0.5, rtol=1e-14)
    assert band.outer_euclidean == pytest.approx(math.log(1e12) / (2 * math.sqrt(1e-3)))


def test_leak_band_ratios():
    n = 1e12
    assert shape.leak_to_zero_band(n, n ** -0.5).ratio == pytest.approx(0.5)
    circ = [shape.leak_to_zero_band(m, 1 / math.log(m)).ratio for m in (1e7, 1e12, 1e100)]
    assert circ[0] < circ[1] < circ[2] < 1 and circ[2] > 0.97
    bad = shape.leak_to_zero_band(100, 0.001)
    assert not bad.valid and bad.r_inner is None and bad.ratio is None


def test_small_t_expansions():
    rep = shape.small_t_saddle_expansions(0.5, 1e-4)
    a, t = 0.5, 1e-4
    assert rep.error("w1") <= (2 * (2 * a * a / (1 + a * a)) + 0.5) * t
    assert rep.error("w2") < rep.error("w1")
    errs = [shape.small_t_saddle_expansions(a, tt).error("S") / math.sqrt(tt)
            for tt in (1e-2, 1e-3, 1e-4, 1e-5)]
    assert all(e2 < e1 for e1, e2 in zip(errs, errs[1:]))
    g = [shape.small_t_saddle_expansions(a, tt).rel_error("G") for tt in (1e-2, 1e-4, 1e-6)]
    assert g[0] > g[1] > g[2] and g[2] < 1e-2
    q = [shape.small_t_saddle_expansions(a, tt).rel_error("quad") for tt in (1e-2, 1e-4, 1e-6)]
    assert q[0] > q[1] > q[2] and q[2] < 1e-2
    # the quadratic constant follows from the exact S'' at the saddle
    sd = shape.saddle(a, 1 + 1e-6)
    assert sd.S_pp * math.sqrt(1e-6) == pytest.approx((1 + a * a) ** 1.5 / 2, rel=1e-2)


def test_small_t_expansions_reject_large_t():
    with pytest.raises(ValueError):
        shape.small_t_saddle_expansions(0.5, 0.1)


# -- branch points, amoeba, duality ----------------------------------------------

def test_branch_points_d2():
    w = shape.branch_points(2)
    s6 = math.sqrt(6)
    expect = (5 - 2 * s6, 3 - 2 * SQ2, 3 + 2 * SQ2, 5 + 2 * s6)
    assert w == pytest.approx(expect, rel=1e-13)
    assert w == pytest.approx((0.10102, 0.17157, 5.82843, 9.89898), abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(d=st.floats(1.0000001, 1e6))
def test_branch_point_identities(d):
    w1, w2, w3, w4 = shape.branch_points(d)
    assert w1 < w2 < w3 < w4
    assert abs(w1 * w4 - 1) < 1e-12 and abs(w2 * w3 - 1) < 1e-12
    assert w4 > 3 + 2 * SQ2
    for w in (w1, w2, w3, w4):
        v = 4 * d - w - 1 / w
        assert abs((v - 2) * (v + 2)) < 1e-9 * max(1.0, v * v)


@pytest.mark.parametrize("d", [1.05, 2, 20])
def test_amoeba_symmetries(d):
    pts = shape.amoeba_gas_boundary(d, 513)
    key = lambda p: np.round(p, 6)  # noqa: E731
    s = {tuple(key(p)) for p in pts}
    # the oval is invariant under negation; sampling in w makes the swap check an interpolation
    assert all(tuple(key(-p)) in s for p in pts)
    # swapping coordinates maps the oval onto itself
    seg = np.max(np.hypot(*np.diff(pts, axis=0).T))
    swapped = pts[:, ::-1]
    dist = np.min(np.hypot(swapped[:, None, 0] - pts[None, :, 0],
                           swapped[:, None, 1] - pts[None, :, 1]), axis=1)
    assert dist.max() <= seg
    x, y = pts[:, 0], pts[:, 1]
    assert np.max(np.abs(x)) == pytest.approx(np.max(np.abs(y)), rel=1e-12)
    # the points lie on P(z, w) = 0
    z, w = np.exp(x), np.exp(y)
    assert np.max(np.abs(4 * d - z - 1 / z - w - 1 / w)) < 1e-9 * d


def test_amoeba_axis_crossings():
    pts = shape.amoeba_gas_boundary(2, 257)
    on_axis = np.unique(pts[np.abs(pts[:, 0]) < 1e-14], axis=0)
    assert sorted(on_axis[:, 1]) == pytest.approx(
        [-math.log(3 + 2 * SQ2), math.log(3 + 2 * SQ2)], rel=1e-14)


@pytest.mark.parametrize("d", [1.2, 2, 10])
def test_dual_check(d):
    rep = shape.dual_check(d)
    assert rep.sup_error < 1e-6 and rep.Sa_rel_error < 1e-6 and rep.passed
    assert rep.Q_rel_error < 1e-6 and rep.on_amoeba < 1e-6


def test_dual_point_at_axis():
    sd = shape.saddle(0, 2)
    assert -math.log(sd.w_plus) == 0
    assert -math.log(sd.z_cr) == pytest.approx(-math.log(krw.z_plus_one(2)), rel=1e-15)
