"""Certified images and preimages of queries over box-union domains.

Preimages use level-synchronous interval set inversion: every undetermined
box is bisected along its widest side (lowest index on ties) once per level,
so the result does not depend on processing order. Boxes whose interval
image lies in the target go to the inner approximation, boxes whose image
misses it are dropped, and the rest form the boundary layer.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import BoxUnion, DimensionError, Interval, measure
from .expr import Query

DEFAULT_EPS_IMG = 1e-9
DEFAULT_MAX_DEPTH = 40
DEFAULT_EPS_VOL_REL = 1e-4
# hard cap on boundary boxes kept at one level
MAX_BOXES = 4_000_000


@dataclass(frozen=True)
class DomainSpec:
    """The range of the private variable, stored with interior-disjoint boxes."""

    domain: BoxUnion
    _measure: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.domain.is_empty:
            raise ValueError("domain must be nonempty")
        object.__setattr__(self, "domain", self.domain.disjointified())
        object.__setattr__(self, "_measure", measure(self.domain))

    @classmethod
    def from_boxes(cls, boxes, dim: int | None = None) -> "DomainSpec":
        return cls(BoxUnion.from_boxes(boxes, dim=dim))

    @classmethod
    def cube(cls, lo: float, hi: float, dim: int) -> "DomainSpec":
        return cls(BoxUnion.box([lo] * dim, [hi] * dim))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def measure(self) -> float:
        return self._measure

    def default_eps_vol(self) -> float:
        return DEFAULT_EPS_VOL_REL * self._measure


@dataclass(frozen=True)
class SetApprox:
    """Certified enclosure ``inner ⊆ S ⊆ outer`` of a set S.

    ``boundary`` holds the undetermined boxes, so ``outer = inner ∪ boundary``.
    ``gap`` is ``measure(outer) - measure(inner)``.
    """

    inner: BoxUnion
    boundary: BoxUnion
    depth: int = 0

    @property
    def outer(self) -> BoxUnion:
        if self.boundary.is_empty:
            return self.inner
        if self.inner.is_empty:
            return self.boundary
        return BoxUnion(np.vstack([self.inner.lo, self.boundary.lo]),
                        np.vstack([self.inner.hi, self.boundary.hi]),
                        disjoint=self.inner.disjoint and self.boundary.disjoint)

    @property
    def gap(self) -> float:
        return measure(self.outer) - measure(self.inner)

    @property
    def dim(self) -> int:
        return self.inner.dim

    @classmethod
    def exact(cls, s: BoxUnion) -> "SetApprox":
        return cls(s, BoxUnion.empty(s.dim))

    def union(self, other: "SetApprox") -> "SetApprox":
        return SetApprox(self.inner.union(other.inner), self.boundary.union(other.boundary),
                         max(self.depth, other.depth))

    def measure_bounds(self) -> tuple[float, float]:
        return measure(self.inner), measure(self.outer)


def _split(lo, hi):
    """Bisect each box along its widest side; ties go to the lowest index."""
    k = lo.shape[0]
    axis = np.argmax(hi - lo, axis=1)
    rows = np.arange(k)
    mid = 0.5 * (lo[rows, axis] + hi[rows, axis])
    lo2 = lo.copy()
    hi1 = hi.copy()
    hi1[rows, axis] = mid
    lo2[rows, axis] = mid
    return np.vstack([lo, lo2]), np.vstack([hi1, hi])


def _domain_of(X) -> BoxUnion:
    if isinstance(X, DomainSpec):
        return X.domain
    if isinstance(X, BoxUnion):
        return X
    raise TypeError("domain must be a DomainSpec or BoxUnion")


def _check_dim(f: Query, dom: BoxUnion):
    if f.dim != dom.dim:
        raise DimensionError(f"query has dimension {f.dim}, domain has {dom.dim}")


def _extreme(f: Query, lo, hi, sign: float, eps: float, max_iter: int = 200) -> float:
    """Certified lower bound of sign*f within eps of its infimum over the boxes."""
    best = math.inf
    floor = math.inf
    for _ in range(max_iter):
        flo, fhi = f.bounds(lo, hi)
        g = flo if sign > 0 else -fhi
        centers = 0.5 * (lo + hi)
        vals = sign * f.eval_points(np.vstack([centers, lo]))
        best = min(best, float(vals.min()))
        keep = g < best - eps
        if np.any(~keep):
            floor = min(floor, float(g[~keep].min()))
        if not keep.any():
            return min(floor, best)
        lo, hi = lo[keep], hi[keep]
        if 2 * lo.shape[0] > MAX_BOXES:
            break
        lo, hi = _split(lo, hi)
    flo, fhi = f.bounds(lo, hi)
    g = flo if sign > 0 else -fhi
    return min(floor, float(g.min()), best)


def image_interval(f: Query, X, eps_img: float = DEFAULT_EPS_IMG) -> Interval:
    """Interval ``[lo, hi]`` enclosing f over the domain, each end within
    ``eps_img`` of the true extremum; exact for polynomial fast paths."""
    if not eps_img > 0:
        raise ValueError("eps_img must be positive")
    dom = _domain_of(X)
    _check_dim(f, dom)
    if dom.is_empty:
        raise ValueError("image of the empty set")
    lo, hi = np.array(dom.lo), np.array(dom.hi)
    if f.is_fast_path:
        flo, fhi = f.bounds(lo, hi)
        return Interval(float(flo.min()), float(fhi.max()))
    ylo = _extreme(f, lo, hi, 1.0, eps_img)
    yhi = -_extreme(f, lo, hi, -1.0, eps_img)
    return Interval(ylo, yhi)


def preimage(f: Query, interval: Interval, X, eps_vol: float | None = None,
             max_depth: int = DEFAULT_MAX_DEPTH) -> SetApprox:
    """Inner/outer approximation of ``{x in X : f(x) in interval}``.

    The half-open bins used by policies are treated as closed here; their
    boundaries have measure zero. Refinement stops once the gap is at most
    ``eps_vol`` or ``max_depth`` levels have been done.
    """
    dom = _domain_of(X)
    _check_dim(f, dom)
    if not isinstance(interval, Interval):
        interval = Interval(*interval)
    if eps_vol is None:
        eps_vol = DEFAULT_EPS_VOL_REL * measure(dom)
    if eps_vol < 0:
        raise ValueError("eps_vol must be nonnegative")
    n = dom.dim
    lo, hi = np.array(dom.lo), np.array(dom.hi)
    a, b = interval.lo, interval.hi
    in_lo, in_hi = [], []
    depth = 0
    while True:
        flo, fhi = f.bounds(lo, hi)
        inside = (flo >= a) & (fhi <= b)
        out = (fhi < a) | (flo > b)
        if inside.any():
            in_lo.append(lo[inside])
            in_hi.append(hi[inside])
        und = ~(inside | out)
        lo, hi = lo[und], hi[und]
        gap = math.fsum(np.prod(hi - lo, axis=1).tolist())
        if lo.shape[0] == 0 or gap <= eps_vol or depth >= max_depth or 2 * lo.shape[0] > MAX_BOXES:
            break
        lo, hi = _split(lo, hi)
        depth += 1
    inner = BoxUnion(np.vstack(in_lo) if in_lo else np.empty((0, n)),
                     np.vstack(in_hi) if in_hi else np.empty((0, n)), disjoint=dom.disjoint)
    boundary = BoxUnion(lo.reshape(-1, n), hi.reshape(-1, n), disjoint=dom.disjoint)
    return SetApprox(inner, boundary, depth)


def check_unrelated(a: BoxUnion, b: BoxUnion, joint: BoxUnion) -> bool:
    """True when ``joint`` equals ``a × b`` as a point set."""
    if joint.dim != a.dim + b.dim:
        raise DimensionError(f"joint has dimension {joint.dim}, expected {a.dim + b.dim}")
    return joint.set_equal(a.product(b))


def is_nonconstant_on(f: Query, region: BoxUnion, max_depth: int = 12) -> bool:
    """Whether f varies on a positive-measure part of ``region``.

    Looks for a sub-box of positive volume on which some partial derivative
    is bounded away from zero.
    """
    _check_dim(f, region)
    if f.kind == "constant":
        return False
    grads = [g for g in f.gradient() if g.kind != "constant" or g.const != 0.0]
    if not grads:
        return False
    vol = region.volumes()
    lo, hi = np.array(region.lo[vol > 0]), np.array(region.hi[vol > 0])
    for _ in range(max_depth + 1):
        if lo.shape[0] == 0:
            return False
        live = np.zeros(lo.shape[0], dtype=bool)
        for g in grads:
            glo, ghi = g.bounds(lo, hi)
            if np.any((glo > 0) | (ghi < 0)):
                return True
            live |= (glo != 0) | (ghi != 0)
        lo, hi = lo[live], hi[live]
        if 2 * lo.shape[0] > MAX_BOXES:
            break
        lo, hi = _split(lo, hi)
    if lo.shape[0] == 0:
        return False
    vals = f.eval_points(0.5 * (lo + hi))
    return bool(vals.max() > vals.min())
