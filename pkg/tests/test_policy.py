import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nsprivacy.geometry import BoxUnion
from nsprivacy.policy import (Cell, PiecewiseConstantPolicy, PolicyError, apply_policy, bin_count,
                              classify_points, uniform_quantizer)
from nsprivacy.query import DomainSpec, SetApprox, parse_query

SQUARE = DomainSpec.cube(-2, 2, 2)
AVG = parse_query("(x1 + x2)/2", 2)
QUAD = parse_query("x1^2 + 2*x2^2", 2)


def test_square_average_quantizer():
    u = uniform_quantizer(-2, 2, 2)
    assert u.q == 4
    assert u.values == [-1.5, -0.5, 0.5, 1.5]
    assert u.breakpoints == [-2, -1, 0, 1, 2]


def test_quadratic_quantizer():
    u = uniform_quantizer(0, 12, 2)
    assert u.values == [i - 0.5 for i in range(1, 13)]


@pytest.mark.parametrize("gamma", [0.1, 0.2933, 1, 3])
def test_count_for_averaged_heights(gamma):
    assert uniform_quantizer(100, 250, gamma).q == math.ceil(75 * gamma)


@given(st.floats(-100, 100), st.floats(0.01, 100), st.floats(0.01, 50))
def test_quantizer_is_minimal_and_feasible(lo, span, gamma):
    u = uniform_quantizer(lo, lo + span, gamma)
    assert u.width <= (2 / gamma) * (1 + 1e-9)
    if u.q > 1:
        # one bin fewer cannot respect the width cap
        assert span / (u.q - 1) > 2 / gamma
    assert bin_count(lo, lo + span, gamma) == u.q


def test_quantizer_clamps():
    u = uniform_quantizer(-2, 2, 2)
    assert u(-2) == -1.5 and u(2) == 1.5 and u(0) == 0.5 and u(-0.0001) == -0.5


def test_apply_average_and_quadratic():
    p1 = PiecewiseConstantPolicy.from_quantizer(AVG, SQUARE, uniform_quantizer(-2, 2, 2))
    assert apply_policy(p1, [0.9, 0.9]) == 0.5
    p2 = PiecewiseConstantPolicy.from_quantizer(QUAD, SQUARE, uniform_quantizer(0, 12, 2))
    assert apply_policy(p2, [0, 0]) == 0.5
    with pytest.raises(PolicyError):
        apply_policy(p1, [3, 0])


def test_constant_query_degenerate_bin():
    q = parse_query("0*x1 + 4", 2)
    p = PiecewiseConstantPolicy.level_set(q, SQUARE, [4, 4], [4])
    assert apply_policy(p, [1, 1]) == 4


def test_level_set_validation():
    with pytest.raises(PolicyError):
        PiecewiseConstantPolicy.level_set(AVG, SQUARE, [0, 0, 1], [1, 2])
    with pytest.raises(PolicyError):
        PiecewiseConstantPolicy.level_set(AVG, SQUARE, [0, 1], [1, 2])


def test_explicit_membership_first_cell_wins_on_shared_face():
    left = BoxUnion.box([-2, -2], [0, 2])
    right = BoxUnion.box([0, -2], [2, 2])
    p = PiecewiseConstantPolicy.explicit(SQUARE, [left, right], [1.0, 2.0])
    # half-open: the shared face x1 = 0 belongs to the right cell
    assert apply_policy(p, [0, 0]) == 2.0
    # the domain's upper face is closed
    assert apply_policy(p, [2, 2]) == 2.0
    assert apply_policy(p, [-2, -2]) == 1.0


def test_classify_matches_pointwise():
    rng = np.random.default_rng(0)
    cells = []
    for a, b in [(-2, -0.5), (-0.5, 1), (1, 2)]:
        cells.append(BoxUnion.box([a, -2], [b, 2]))
    p = PiecewiseConstantPolicy.explicit(SQUARE, cells, [0, 1, 2])
    pts = np.vstack([rng.uniform(-2, 2, (300, 2)), [[-0.5, 0], [1, 1], [2, 2], [3, 0]]])
    idx, vals = classify_points(p, pts)
    for x, v, i in zip(pts, vals, idx):
        if i < 0:
            with pytest.raises(PolicyError):
                apply_policy(p, x)
        else:
            assert apply_policy(p, x) == v


def test_hybrid_needs_hybrid_form():
    c = Cell(SetApprox.exact(SQUARE.domain), query=AVG)
    with pytest.raises(PolicyError):
        PiecewiseConstantPolicy("explicit", SQUARE, cells=[c])
    p = PiecewiseConstantPolicy.hybrid(SQUARE, [c])
    assert apply_policy(p, [1, 0]) == 0.5


def test_serialization_round_trip():
    p = PiecewiseConstantPolicy.from_quantizer(AVG, SQUARE, uniform_quantizer(-2, 2, 2))
    q = PiecewiseConstantPolicy.from_dict(p.to_dict(), SQUARE)
    assert q.breakpoints == p.breakpoints and q.values == p.values
    cells = p.level_cells(eps_vol=0.1)
    e = PiecewiseConstantPolicy("explicit", SQUARE, cells=cells)
    e2 = PiecewiseConstantPolicy.from_dict(e.to_dict(), SQUARE, eps_vol=0.1)
    for a, b in zip(e.cells, e2.cells):
        assert a.value == b.value
        assert a.region.inner.set_equal(b.region.inner)
    boxed = PiecewiseConstantPolicy.explicit(SQUARE, [SQUARE.domain], [3.0])
    assert PiecewiseConstantPolicy.from_dict(boxed.to_dict(), SQUARE).cells[0].value == 3.0
