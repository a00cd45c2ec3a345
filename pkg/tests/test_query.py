import copy
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsprivacy.geometry import BoxUnion, Interval, measure
from nsprivacy.query import (DomainSpec, QuerySyntaxError, check_unrelated, image_interval,
                             is_nonconstant_on, parse_query, preimage)

SQUARE = DomainSpec.cube(-2, 2, 2)


def generic(q):
    """Same query, forced through interval arithmetic instead of the closed form."""
    g = copy.copy(q)
    g.kind = "general"
    return g


def test_affine_fast_path():
    q = parse_query("(x1 + x2)/2", 2)
    assert q.kind == "affine"
    assert q.linear.tolist() == [0.5, 0.5] and q.const == 0.0


def test_quadratic_fast_path():
    q = parse_query("x1^2 + 2*x2^2", 2)
    assert q.kind == "quadratic"
    assert q.quad.tolist() == [1.0, 2.0]


def test_cross_term_is_general():
    assert parse_query("x1*x2", 2).kind == "general"


def test_parse_errors():
    with pytest.raises(QuerySyntaxError) as e:
        parse_query("x1 + * x2", 2)
    assert e.value.position == 5
    with pytest.raises(IndexError):
        parse_query("x3", 2)
    with pytest.raises(QuerySyntaxError):
        parse_query("x1^0.5", 1)


def test_unary_minus_binds_tight():
    assert parse_query("-x1^2", 1).eval_point([3.0]) == 9.0


def test_evaluation_tracks_python():
    q = parse_query("3*x1 - x2/4 + (x1 - 1)^3", 2)
    x = np.array([[0.5, 2.0], [-1.0, 3.0]])
    ref = 3 * x[:, 0] - x[:, 1] / 4 + (x[:, 0] - 1) ** 3
    assert np.allclose(q.eval_points(x), ref)
    assert q.eval_point(x[0]) == pytest.approx(ref[0])


def test_image_of_fast_paths():
    assert image_interval(parse_query("(x1 + x2)/2", 2), SQUARE) == Interval(-2, 2)
    assert image_interval(parse_query("x1^2 + 2*x2^2", 2), SQUARE) == Interval(0, 12)


def test_image_of_general_query():
    # max of x1*x2/(x1^2+3) on the square is at (sqrt 3, 2): 1/sqrt(3)
    img = image_interval(parse_query("x1*x2/(x1^2 + 3)", 2), SQUARE, eps_img=1e-9)
    assert img.hi == pytest.approx(1 / math.sqrt(3), abs=2e-9)
    assert img.lo == pytest.approx(-1 / math.sqrt(3), abs=2e-9)
    assert img.hi >= 1 / math.sqrt(3) - 1e-12


def test_slab_preimage_area():
    # {x1 + x2 >= 0} is half the square (8) and {x1 + x2 < -1} a triangle with
    # legs 3 (9/2), so the strip {-1 <= x1 + x2 <= 0} has area 16 - 8 - 9/2 = 7/2
    s = preimage(parse_query("(x1 + x2)/2", 2), Interval(-0.5, 0.0), SQUARE)
    lo, hi = s.measure_bounds()
    assert lo <= 3.5 <= hi
    assert s.gap <= 1e-4 * 16


def test_ellipse_preimage_area():
    s = preimage(parse_query("x1^2 + 2*x2^2", 2), Interval(0, 1), SQUARE)
    lo, hi = s.measure_bounds()
    assert lo <= math.pi / math.sqrt(2) <= hi


def test_disjoint_interval_gives_empty():
    s = preimage(parse_query("x1^2 + 2*x2^2", 2), Interval(20, 30), SQUARE)
    assert s.inner.is_empty and s.boundary.is_empty


def test_preimage_soundness_by_sampling():
    q = parse_query("x1*x2 + x1^2", 2)
    I = Interval(-0.5, 1.0)
    s = preimage(q, I, SQUARE, eps_vol=0.05)
    rng = np.random.default_rng(1)
    pts = rng.uniform(-2, 2, size=(1000, 2))
    vals = q.eval_points(pts)
    hit = (vals >= I.lo) & (vals <= I.hi)
    assert s.outer.contains_points(pts[hit]).all()
    inner = s.inner
    idx = rng.integers(0, len(inner), 1000)
    u = rng.random((1000, 2))
    pin = inner.lo[idx] + u * (inner.hi[idx] - inner.lo[idx])
    v = q.eval_points(pin)
    assert np.all((v >= I.lo - 1e-9) & (v <= I.hi + 1e-9))


def test_halving_tolerance_never_widens_gap():
    q = parse_query("x1^2 + 2*x2^2", 2)
    gaps = [preimage(q, Interval(1, 3), SQUARE, eps_vol=e).gap for e in (0.4, 0.2, 0.1, 0.05)]
    assert all(b <= a for a, b in zip(gaps, gaps[1:]))


@pytest.mark.parametrize("text,I", [("(x1 + x2)/2", (-0.5, 0.7)), ("x1^2 + 2*x2^2", (1, 4))])
def test_fast_path_matches_generic(text, I):
    q = parse_query(text, 2)
    a = preimage(q, Interval(*I), SQUARE, eps_vol=0.02)
    b = preimage(generic(q), Interval(*I), SQUARE, eps_vol=0.02)
    m_a, m_b = np.mean(a.measure_bounds()), np.mean(b.measure_bounds())
    assert abs(m_a - m_b) <= a.gap + b.gap


def test_partition_consistency():
    q = parse_query("x1^2 + 2*x2^2", 2)
    cuts = [0, 1.5, 4, 7.25, 12]
    parts = [preimage(q, Interval(a, b), SQUARE, eps_vol=0.05) for a, b in zip(cuts, cuts[1:])]
    assert sum(p.measure_bounds()[0] for p in parts) <= 16 + 1e-9
    assert sum(p.measure_bounds()[1] for p in parts) >= 16 - 1e-9


@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-2, 2), st.floats(-2, 2),
       st.floats(0, 2), st.floats(0, 2))
def test_bounds_enclose_samples(a, b, x0, y0, w, h):
    q = parse_query(f"{a}*x1*x2 + ({b})*x1^2 - x2", 2)
    lo, hi = np.array([[x0, y0]]), np.array([[x0 + w, y0 + h]])
    flo, fhi = q.bounds(lo, hi)
    rng = np.random.default_rng(0)
    pts = lo + rng.random((50, 2)) * (hi - lo)
    v = q.eval_points(pts)
    assert np.all(v >= flo[0] - 1e-9) and np.all(v <= fhi[0] + 1e-9)


def test_unrelated_check():
    a = BoxUnion.box([0], [1])
    b = BoxUnion.box([0], [2])
    assert check_unrelated(a, b, BoxUnion.box([0, 0], [1, 2]))
    band = BoxUnion.from_boxes([[[0, 0.5], [0, 1]], [[0.5, 1], [1, 2]]])
    assert not check_unrelated(a, b, band)


def test_nonconstant_detection():
    r = BoxUnion.box([0, 0], [1, 1])
    assert is_nonconstant_on(parse_query("x1 - x2", 2), r)
    assert not is_nonconstant_on(parse_query("x1 - x1 + 3", 2), r)
    assert measure(r) == 1.0
