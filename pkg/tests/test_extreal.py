import math

import pytest

from nsprivacy.extreal import (DEGENERATE, INF, NEG_INF, UNBOUNDED, Bounds, decode, encode,
                               ext_log, ext_sub)


def test_log_conventions():
    assert ext_log(0.0) == NEG_INF
    assert ext_log(INF) == INF
    assert ext_log(1.0) == 0.0
    with pytest.raises(ValueError):
        ext_log(-1.0)


def test_indeterminate_difference():
    assert ext_sub(0.0, NEG_INF) == INF
    with pytest.raises(ValueError):
        ext_sub(INF, INF)


@pytest.mark.parametrize("x", [1.5, INF, NEG_INF, DEGENERATE, UNBOUNDED])
def test_encoding_round_trip(x):
    assert decode(encode(x)) == x or decode(encode(x)) is x


def test_encode_rejects_nan():
    with pytest.raises(ValueError):
        encode(math.nan)


def test_bounds():
    b = Bounds(1.0, 3.0)
    assert b.value == 2.0 and b.width == 2.0 and 2.5 in b
    assert Bounds(NEG_INF).width == 0.0 and Bounds(NEG_INF).is_exact
    assert Bounds(NEG_INF, 1.0).value == 1.0
    with pytest.raises(ValueError):
        Bounds(2.0, 1.0)
