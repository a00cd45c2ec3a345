"""Extended-real helpers.

Extended reals are plain Python floats; ``math.inf`` and ``-math.inf`` carry
the infinite values. This module adds the log(0) = -inf convention, the JSON
encoding, and the two non-numeric markers used in reports.
"""
import math

INF = math.inf
NEG_INF = -math.inf


class _Marker:
    __slots__ = ("name",)

    def __init__(self, name):
        self.name = name

    def __repr__(self):
        return self.name

    def __reduce__(self):
        return (_marker, (self.name,))


_MARKERS = {}


def _marker(name):
    return _MARKERS.setdefault(name, _Marker(name))


#: transmission that cannot be evaluated because the output range has measure zero
DEGENERATE = _marker("DEGENERATE")
#: infinitely many taxicab classes
UNBOUNDED = _marker("UNBOUNDED")


def ext_log(x):
    """Natural log on [0, inf] with log(0) = -inf."""
    if x < 0:
        raise ValueError(f"log of negative value {x!r}")
    if x == 0:
        return NEG_INF
    if x == INF:
        return INF
    return math.log(x)


def ext_sub(a, b):
    """a - b on extended reals; inf - inf is undefined."""
    if math.isinf(a) and math.isinf(b) and (a > 0) == (b > 0):
        raise ValueError("indeterminate form inf - inf")
    return a - b


def encode(x):
    """JSON encoding: finite number, "+inf", "-inf", or a marker name in lower case."""
    if x is DEGENERATE:
        return "degenerate"
    if x is UNBOUNDED:
        return "unbounded"
    if x is None:
        return None
    x = float(x)
    if x == INF:
        return "+inf"
    if x == NEG_INF:
        return "-inf"
    if math.isnan(x):
        raise ValueError("NaN is not an extended real")
    return x


def decode(v):
    if v == "+inf":
        return INF
    if v == "-inf":
        return NEG_INF
    if v == "degenerate":
        return DEGENERATE
    if v == "unbounded":
        return UNBOUNDED
    return float(v)


class Bounds(tuple):
    """Certified enclosure ``(lo, hi)`` of an extended-real quantity."""

    __slots__ = ()

    def __new__(cls, lo, hi=None):
        lo = float(lo)
        hi = lo if hi is None else float(hi)
        if math.isnan(lo) or math.isnan(hi) or lo > hi:
            raise ValueError(f"invalid bounds ({lo!r}, {hi!r})")
        return tuple.__new__(cls, (lo, hi))

    @property
    def lo(self) -> float:
        return self[0]

    @property
    def hi(self) -> float:
        return self[1]

    @property
    def width(self) -> float:
        return 0.0 if self[0] == self[1] else self[1] - self[0]

    @property
    def is_exact(self) -> bool:
        return self[0] == self[1]

    @property
    def value(self) -> float:
        """Point value: the common value, the midpoint, or the finite end."""
        lo, hi = self
        if lo == hi:
            return lo
        if math.isinf(lo) and math.isinf(hi):
            return math.nan
        if math.isinf(lo):
            return hi
        if math.isinf(hi):
            return lo
        return 0.5 * (lo + hi)

    def __contains__(self, x) -> bool:
        return self[0] <= x <= self[1]

    def __repr__(self):
        return f"Bounds({self[0]!r}, {self[1]!r})"
