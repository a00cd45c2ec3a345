"""Finite unions of closed axis-aligned boxes in R^n.

Every range handled by the package (marginal and conditional ranges, policy
cells, inner/outer approximations of preimages) is a :class:`BoxUnion`. The
operations here are exact up to floating-point rounding.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from . import _backend

_HULL_MAX_DIM = 4
_HULL_MIN_BOXES = 64

__all__ = [
    "DimensionError",
    "EmptySetError",
    "Interval",
    "Box",
    "BoxUnion",
    "measure",
    "diameter",
    "enclosing_center",
    "covering_number_1d",
    "intersection",
    "union",
    "difference",
    "contains",
    "set_equal",
]

# pairwise broadcasts above this many box pairs are processed in blocks
_BLOCK = 1 << 20


class DimensionError(ValueError):
    """Operands live in spaces of different dimension."""


class EmptySetError(ValueError):
    """The quantity is undefined on the empty set."""


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not self.lo <= self.hi:
            raise ValueError(f"interval requires lo <= hi, got [{self.lo}, {self.hi}]")

    @property
    def length(self) -> float:
        return self.hi - self.lo

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, x) -> bool:
        return self.lo <= x <= self.hi


@dataclass(frozen=True)
class Box:
    sides: tuple[Interval, ...]

    def __post_init__(self):
        if len(self.sides) == 0:
            raise ValueError("a box needs at least one side")
        object.__setattr__(self, "sides", tuple(
            s if isinstance(s, Interval) else Interval(*s) for s in self.sides))

    @property
    def dim(self) -> int:
        return len(self.sides)

    @property
    def volume(self) -> float:
        return math.prod(s.length for s in self.sides)


class BoxUnion:
    """A finite union of closed boxes, stored as ``(k, n)`` corner arrays.

    ``disjoint`` records that the boxes have pairwise disjoint interiors, which
    lets :meth:`measure` sum volumes instead of sweeping. Constructors that
    cannot guarantee it leave it ``False``.
    """

    __slots__ = ("_lo", "_hi", "disjoint")

    def __init__(self, lo, hi, disjoint: bool = False):
        lo = np.array(lo, dtype=np.float64, ndmin=2)
        hi = np.array(hi, dtype=np.float64, ndmin=2)
        if lo.shape != hi.shape or lo.ndim != 2 or lo.shape[1] < 1:
            raise ValueError(f"corner arrays must share shape (k, n), got {lo.shape} and {hi.shape}")
        if lo.size and not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("box corners must be finite")
        if lo.size and np.any(lo > hi):
            raise ValueError("every box needs lo <= hi in each coordinate")
        lo.setflags(write=False)
        hi.setflags(write=False)
        self._lo = lo
        self._hi = hi
        self.disjoint = bool(disjoint) or lo.shape[0] <= 1

    # -- construction -------------------------------------------------------
    @classmethod
    def empty(cls, dim: int) -> "BoxUnion":
        if dim < 1:
            raise ValueError("dim must be positive")
        return cls(np.empty((0, dim)), np.empty((0, dim)), disjoint=True)

    @classmethod
    def box(cls, lo: Sequence[float], hi: Sequence[float]) -> "BoxUnion":
        return cls([lo], [hi], disjoint=True)

    @classmethod
    def from_boxes(cls, boxes: Iterable, dim: int | None = None,
                   disjoint: bool = False) -> "BoxUnion":
        """Build from an iterable of :class:`Box` or lists of ``(lo, hi)`` pairs."""
        los, his = [], []
        for b in boxes:
            sides = b.sides if isinstance(b, Box) else b
            los.append([float(s[0]) if not isinstance(s, Interval) else s.lo for s in sides])
            his.append([float(s[1]) if not isinstance(s, Interval) else s.hi for s in sides])
        if not los:
            if dim is None:
                raise ValueError("dim is required for an empty union")
            return cls.empty(dim)
        width = {len(r) for r in los}
        if len(width) != 1:
            raise DimensionError("boxes of different dimension")
        if dim is not None and width != {dim}:
            raise DimensionError(f"boxes have dimension {width.pop()}, expected {dim}")
        return cls(los, his, disjoint=disjoint)

    # -- basic accessors ----------------------------------------------------
    @property
    def lo(self) -> np.ndarray:
        return self._lo

    @property
    def hi(self) -> np.ndarray:
        return self._hi

    @property
    def dim(self) -> int:
        return self._lo.shape[1]

    def __len__(self) -> int:
        return self._lo.shape[0]

    @property
    def is_empty(self) -> bool:
        return self._lo.shape[0] == 0

    def boxes(self) -> list[Box]:
        return [Box(tuple(Interval(a, b) for a, b in zip(l, h)))
                for l, h in zip(self._lo.tolist(), self._hi.tolist())]

    def to_list(self) -> list:
        """JSON-ready nested lists: one list of ``[lo, hi]`` pairs per box."""
        return [[[a, b] for a, b in zip(l, h)]
                for l, h in zip(self._lo.tolist(), self._hi.tolist())]

    def volumes(self) -> np.ndarray:
        return np.prod(self._hi - self._lo, axis=1)

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        if self.is_empty:
            raise EmptySetError("bounding box of the empty set")
        return self._lo.min(axis=0), self._hi.max(axis=0)

    def __repr__(self):
        return f"BoxUnion(dim={self.dim}, boxes={len(self)}, disjoint={self.disjoint})"

    # -- measure-theoretic quantities ---------------------------------------
    def measure(self) -> float:
        return measure(self)

    def diameter(self) -> float:
        return diameter(self)

    # -- membership ---------------------------------------------------------
    def contains_point(self, x) -> bool:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise DimensionError(f"point has dimension {x.shape[0]}, set has {self.dim}")
        if self.is_empty:
            return False
        return bool(np.any(np.all((self._lo <= x) & (x <= self._hi), axis=1)))

    def contains_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise DimensionError("points must have shape (m, dim)")
        out = np.zeros(pts.shape[0], dtype=bool)
        if self.is_empty:
            return out
        step = max(1, _BLOCK // max(1, len(self)))
        for s in range(0, pts.shape[0], step):
            p = pts[s:s + step, None, :]
            out[s:s + step] = np.any(np.all((self._lo <= p) & (p <= self._hi), axis=2), axis=1)
        return out

    # -- set algebra --------------------------------------------------------
    def _check(self, other: "BoxUnion"):
        if self.dim != other.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def union(self, other: "BoxUnion") -> "BoxUnion":
        self._check(other)
        if other.is_empty:
            return self
        if self.is_empty:
            return other
        return BoxUnion(np.vstack([self._lo, other._lo]), np.vstack([self._hi, other._hi]))

    def intersection(self, other: "BoxUnion") -> "BoxUnion":
        self._check(other)
        if self.is_empty or other.is_empty:
            return BoxUnion.empty(self.dim)
        los, his = [], []
        step = max(1, _BLOCK // len(other))
        for s in range(0, len(self), step):
            lo = np.maximum(self._lo[s:s + step, None, :], other._lo[None, :, :])
            hi = np.minimum(self._hi[s:s + step, None, :], other._hi[None, :, :])
            ok = np.all(lo <= hi, axis=2)
            los.append(lo[ok])
            his.append(hi[ok])
        return BoxUnion(np.vstack(los), np.vstack(his),
                        disjoint=self.disjoint and other.disjoint)

    def difference(self, other: "BoxUnion") -> "BoxUnion":
        """Closure of ``self \\ other``.

        Pieces touching ``other`` along a face keep that face; the result is
        empty exactly when the point-set difference is empty.
        """
        self._check(other)
        if self.is_empty or other.is_empty:
            return self
        lo = self._lo.copy()
        hi = self._hi.copy()
        n = self.dim
        for blo, bhi in zip(other._lo, other._hi):
            if lo.shape[0] == 0:
                break
            hit = np.all((lo <= bhi) & (blo <= hi), axis=1)
            if not hit.any():
                continue
            keep_lo, keep_hi = [lo[~hit]], [hi[~hit]]
            clo, chi = lo[hit].copy(), hi[hit].copy()
            for k in range(n):
                below = clo[:, k] < blo[k]
                if below.any():
                    plo, phi = clo[below].copy(), chi[below].copy()
                    phi[:, k] = np.minimum(phi[:, k], blo[k])
                    keep_lo.append(plo)
                    keep_hi.append(phi)
                    clo[below, k] = blo[k]
                above = chi[:, k] > bhi[k]
                if above.any():
                    plo, phi = clo[above].copy(), chi[above].copy()
                    plo[:, k] = np.maximum(plo[:, k], bhi[k])
                    keep_lo.append(plo)
                    keep_hi.append(phi)
                    chi[above, k] = bhi[k]
            lo = np.vstack(keep_lo)
            hi = np.vstack(keep_hi)
        return BoxUnion(lo.reshape(-1, n), hi.reshape(-1, n), disjoint=self.disjoint)

    def issubset(self, other: "BoxUnion") -> bool:
        return self.difference(other).is_empty

    def set_equal(self, other: "BoxUnion") -> bool:
        return self.issubset(other) and other.issubset(self)

    def product(self, other: "BoxUnion") -> "BoxUnion":
        """Cartesian product; coordinates of ``self`` come first."""
        if self.is_empty or other.is_empty:
            return BoxUnion.empty(self.dim + other.dim)
        k1, k2 = len(self), len(other)
        lo = np.hstack([np.repeat(self._lo, k2, axis=0), np.tile(other._lo, (k1, 1))])
        hi = np.hstack([np.repeat(self._hi, k2, axis=0), np.tile(other._hi, (k1, 1))])
        return BoxUnion(lo, hi, disjoint=self.disjoint and other.disjoint)

    def permute(self, perm: Sequence[int]) -> "BoxUnion":
        perm = list(perm)
        if sorted(perm) != list(range(self.dim)):
            raise ValueError("perm must be a permutation of the coordinates")
        return BoxUnion(self._lo[:, perm], self._hi[:, perm], disjoint=self.disjoint)

    def split(self, index: int, axis: int, at: float) -> "BoxUnion":
        """Replace box ``index`` by its two halves cut at ``axis = at``."""
        l, h = self._lo[index].copy(), self._hi[index].copy()
        if not l[axis] <= at <= h[axis]:
            raise ValueError("cut position outside the box")
        l2, h1 = l.copy(), h.copy()
        h1[axis] = at
        l2[axis] = at
        rest = np.arange(len(self)) != index
        return BoxUnion(np.vstack([self._lo[rest], l, l2]), np.vstack([self._hi[rest], h1, h]),
                        disjoint=self.disjoint)

    def disjointified(self) -> "BoxUnion":
        """Same point set with pairwise interior-disjoint boxes."""
        if self.disjoint:
            return self
        out = BoxUnion(self._lo[:1], self._hi[:1], disjoint=True)
        for i in range(1, len(self)):
            piece = BoxUnion(self._lo[i:i + 1], self._hi[i:i + 1], disjoint=True).difference(out)
            if not piece.is_empty:
                out = BoxUnion(np.vstack([out._lo, piece._lo]), np.vstack([out._hi, piece._hi]),
                               disjoint=True)
        return out


def _as_union(s) -> BoxUnion:
    if isinstance(s, BoxUnion):
        return s
    raise TypeError(f"expected BoxUnion, got {type(s).__name__}")


def measure(s: BoxUnion) -> float:
    """Lebesgue measure of the union; overlaps are counted once."""
    s = _as_union(s)
    if s.is_empty:
        return 0.0
    if s.disjoint:
        return math.fsum(s.volumes().tolist())
    return float(_backend.union_measure(s.lo, s.hi))


def _far_distances(lo, hi, i):
    t = np.maximum(hi[i] - lo, hi - lo[i])
    return np.sqrt(np.einsum("ij,ij->i", t, t))


def _hull_corners(lo, hi):
    """Box corners on the convex hull, or None when qhull cannot be used.

    The farthest pair of a box union is a pair of corners, and both lie on the
    hull of all corners, so the pair search can be restricted to these.
    """
    n = lo.shape[1]
    if n == 1 or n > _HULL_MAX_DIM:
        return None
    bits = (np.arange(1 << n)[:, None] >> np.arange(n)) & 1
    pts = np.where(bits[None, :, :] == 1, hi[:, None, :], lo[:, None, :]).reshape(-1, n)
    # a hull vertex is extreme in the last coordinate among points sharing the others
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    key = pts[:, :-1]
    new = np.ones(pts.shape[0], dtype=bool)
    new[1:] = np.any(key[1:] != key[:-1], axis=1)
    first = np.flatnonzero(new)
    last = np.append(first[1:] - 1, pts.shape[0] - 1)
    pts = pts[np.union1d(first, last)]
    if pts.shape[0] <= n + 1:
        return pts
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return None
    return pts[hull.vertices]


def diameter(s: BoxUnion) -> float:
    """Largest Euclidean distance between two points of the union."""
    s = _as_union(s)
    if s.is_empty:
        raise EmptySetError("diameter of the empty set is undefined")
    lo, hi = s.lo, s.hi
    if lo.shape[1] == 1:
        return float(hi.max() - lo.min())
    if lo.shape[0] > _HULL_MIN_BOXES:
        pts = _hull_corners(lo, hi)
        if pts is not None:
            lo = hi = pts
    bb_lo, bb_hi = lo.min(axis=0), hi.max(axis=0)
    t = np.maximum(hi - bb_lo, bb_hi - lo)
    ub = np.sqrt(np.einsum("ij,ij->i", t, t))
    # two farthest-point passes give a tight starting bound for pruning
    i0 = int(np.argmax(ub))
    d0 = _far_distances(lo, hi, i0)
    j0 = int(np.argmax(d0))
    d1 = _far_distances(lo, hi, j0)
    best = float(max(d0[j0], d1.max()))
    order = np.argsort(-ub, kind="stable")
    found, _, _ = _backend.max_box_distance(lo, hi, order, ub, best)
    return float(max(best, found))


def enclosing_center(s: BoxUnion) -> tuple[np.ndarray, float]:
    """Bounding-box center snapped into the set, and its worst-case radius.

    The returned point always lies in ``s``; when the bounding-box center is
    outside, the nearest point of ``s`` is used (lexicographically smallest
    among ties). The radius is the largest distance from that point to ``s``
    and is never below half the diameter.
    """
    s = _as_union(s)
    if s.is_empty:
        raise EmptySetError("enclosing center of the empty set is undefined")
    bb_lo, bb_hi = s.bounding_box()
    c = 0.5 * (bb_lo + bb_hi)
    if not s.contains_point(c):
        proj = np.clip(c, s.lo, s.hi)
        dist = np.linalg.norm(proj - c, axis=1)
        near = proj[dist <= dist.min()]
        near = near[np.lexsort(near.T[::-1])]
        c = near[0]
    t = np.maximum(np.abs(c - s.lo), np.abs(s.hi - c))
    r = float(np.sqrt(np.einsum("ij,ij->i", t, t)).max())
    return c, r


def _merged_intervals(s: BoxUnion) -> list[tuple[float, float]]:
    order = np.lexsort((s.hi[:, 0], s.lo[:, 0]))
    runs: list[list[float]] = []
    for a, b in zip(s.lo[order, 0].tolist(), s.hi[order, 0].tolist()):
        if runs and a <= runs[-1][1]:
            runs[-1][1] = max(runs[-1][1], b)
        else:
            runs.append([a, b])
    return [(a, b) for a, b in runs]


def covering_number_1d(s: BoxUnion, eps: float) -> int:
    """Minimal number of closed intervals of length ``2*eps`` covering ``s``.

    Greedy left-to-right placement, which is optimal on the line.
    """
    s = _as_union(s)
    if s.dim != 1:
        raise DimensionError("covering numbers are only computed in one dimension")
    if s.is_empty:
        raise EmptySetError("covering number of the empty set")
    if not eps > 0:
        raise ValueError("eps must be positive")
    w = 2.0 * eps
    count = 0
    covered = -math.inf
    for a, b in _merged_intervals(s):
        if b <= covered:
            continue
        start = a if a > covered else covered
        n = math.ceil((b - start) / w - 1e-12)
        if a > covered:
            n = max(n, 1)
        count += n
        covered = start + n * w
    return count


def intersection(a: BoxUnion, b: BoxUnion) -> BoxUnion:
    return _as_union(a).intersection(b)


def union(a: BoxUnion, b: BoxUnion) -> BoxUnion:
    return _as_union(a).union(b)


def difference(a: BoxUnion, b: BoxUnion) -> BoxUnion:
    return _as_union(a).difference(b)


def contains(a: BoxUnion, b: BoxUnion) -> bool:
    """True when ``b`` is a subset of ``a``."""
    return _as_union(b).issubset(a)


def set_equal(a: BoxUnion, b: BoxUnion) -> bool:
    return _as_union(a).set_equal(b)
