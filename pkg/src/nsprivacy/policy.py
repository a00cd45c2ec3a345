"""Piecewise-constant release policies.

Three forms are supported:

``level_set``
    a query composed with a scalar quantizer: report ``values[i]`` when the
    query value lies in ``[breakpoints[i], breakpoints[i+1])`` (the last bin is
    closed).
``explicit``
    a list of cells, each a certified set approximation with one value.
``hybrid``
    explicit cells where some cells release a raw query instead of a constant.
    Only used to model non-private mechanisms.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import BoxUnion, DimensionError, Interval
from .query import DomainSpec, Query, SetApprox, image_interval, parse_query, preimage

LEVEL_SET = "level_set"
EXPLICIT = "explicit"
HYBRID = "hybrid"

_CEIL_SLACK = 1e-12


class PolicyError(ValueError):
    pass


@dataclass(frozen=True)
class UniformQuantizer:
    lo: float
    hi: float
    q: int

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError(f"quantizer range needs hi > lo, got [{self.lo}, {self.hi}]")
        if self.q < 1:
            raise ValueError("q must be positive")

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.q

    @property
    def breakpoints(self) -> list[float]:
        span = self.hi - self.lo
        pts = [self.lo + span * i / self.q for i in range(self.q + 1)]
        pts[-1] = self.hi
        return pts

    @property
    def values(self) -> list[float]:
        a = self.breakpoints
        return [0.5 * (a[i] + a[i + 1]) for i in range(self.q)]

    def bin_index(self, y: float) -> int:
        """Index of the left-closed bin holding ``y``, clamped to the range."""
        i = bisect.bisect_right(self.breakpoints, y) - 1
        return min(max(i, 0), self.q - 1)

    def __call__(self, y: float) -> float:
        return self.values[self.bin_index(y)]


def bin_count(lo: float, hi: float, gamma: float) -> int:
    """Smallest q with ``q * 2/gamma >= hi - lo``, guarded against rounding."""
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    v = gamma * (hi - lo) / 2.0
    return max(1, math.ceil(v - _CEIL_SLACK * max(1.0, abs(v))))


def uniform_quantizer(lo: float, hi: float, gamma: float) -> UniformQuantizer:
    """Fewest equal bins on ``[lo, hi]`` whose half-width is at most ``1/gamma``."""
    if not hi > lo:
        raise ValueError(f"quantizer range needs hi > lo, got [{lo}, {hi}]")
    return UniformQuantizer(float(lo), float(hi), bin_count(lo, hi, gamma))


@dataclass(frozen=True)
class Source:
    """Provenance of a cell: ``{x in domain : lo <= query(x) <= hi}``."""

    query: Query
    lo: float
    hi: float


@dataclass(frozen=True)
class Cell:
    region: SetApprox
    value: float | None = None
    query: Query | None = None
    source: Source | None = field(default=None, compare=False)

    def __post_init__(self):
        if (self.value is None) == (self.query is None):
            raise PolicyError("a cell carries either a constant value or a raw query")

    @property
    def is_raw(self) -> bool:
        return self.query is not None


def _as_approx(region) -> SetApprox:
    if isinstance(region, SetApprox):
        return region
    if isinstance(region, BoxUnion):
        return SetApprox.exact(region)
    raise TypeError("cell region must be a BoxUnion or SetApprox")


class PiecewiseConstantPolicy:
    """A deterministic release mechanism over a fixed domain."""

    def __init__(self, form: str, domain: DomainSpec, *, query: Query | None = None,
                 breakpoints: Sequence[float] = (), values: Sequence[float] = (),
                 cells: Sequence[Cell] = (), warnings: Sequence[str] = ()):
        if form not in (LEVEL_SET, EXPLICIT, HYBRID):
            raise PolicyError(f"unknown policy form {form!r}")
        self.form = form
        self.domain = domain
        self.query = query
        self.breakpoints = tuple(float(a) for a in breakpoints)
        self.values = tuple(float(b) for b in values)
        self.cells = tuple(cells)
        self.warnings = tuple(warnings)
        if form == LEVEL_SET:
            if query is None:
                raise PolicyError("a level-set policy needs a query")
            if query.dim != domain.dim:
                raise DimensionError(f"query has dimension {query.dim}, domain has {domain.dim}")
            if len(self.breakpoints) != len(self.values) + 1 or not self.values:
                raise PolicyError("need q+1 breakpoints for q values")
            # a constant query gives one degenerate bin [c, c]
            if len(self.values) > 1 and any(b <= a for a, b in zip(self.breakpoints,
                                                                   self.breakpoints[1:])):
                raise PolicyError("breakpoints must be strictly increasing")
            if self.breakpoints[-1] < self.breakpoints[0]:
                raise PolicyError("breakpoints must be increasing")
        else:
            if not self.cells:
                raise PolicyError("an explicit policy needs at least one cell")
            for c in self.cells:
                if c.region.dim != domain.dim:
                    raise DimensionError(f"cell has dimension {c.region.dim}, domain has {domain.dim}")
                if c.query is not None and c.query.dim != domain.dim:
                    raise DimensionError("raw query dimension does not match the domain")
            if form == EXPLICIT and any(c.is_raw for c in self.cells):
                raise PolicyError("raw-query cells need the hybrid form")

    # -- constructors -------------------------------------------------------
    @classmethod
    def level_set(cls, query: Query, domain: DomainSpec, breakpoints, values, warnings=()):
        return cls(LEVEL_SET, domain, query=query, breakpoints=breakpoints, values=values,
                   warnings=warnings)

    @classmethod
    def from_quantizer(cls, query: Query, domain: DomainSpec, quant: UniformQuantizer):
        return cls.level_set(query, domain, quant.breakpoints, quant.values)

    @classmethod
    def explicit(cls, domain: DomainSpec, regions, values, warnings=()):
        cells = [Cell(_as_approx(r), float(b)) for r, b in zip(regions, values)]
        return cls(EXPLICIT, domain, cells=cells, warnings=warnings)

    @classmethod
    def hybrid(cls, domain: DomainSpec, cells: Sequence[Cell]):
        return cls(HYBRID, domain, cells=cells)

    @classmethod
    def constant(cls, domain: DomainSpec, value: float):
        return cls.explicit(domain, [domain.domain], [value])

    # -- inspection ---------------------------------------------------------
    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def q(self) -> int:
        """Number of bins or cells."""
        return len(self.values) if self.form == LEVEL_SET else len(self.cells)

    def distinct_values(self) -> list[float]:
        vals = self.values if self.form == LEVEL_SET else [c.value for c in self.cells
                                                          if c.value is not None]
        return sorted(set(vals))

    def has_raw_pieces(self) -> bool:
        return any(c.is_raw for c in self.cells)

    def level_cells(self, eps_vol: float | None = None, max_depth: int = 40) -> list[Cell]:
        """The cells of a level-set policy as preimage approximations.

        Bins whose preimage is certainly empty are left out.
        """
        if self.form != LEVEL_SET:
            return list(self.cells)
        out = []
        a = self.breakpoints
        for i, b in enumerate(self.values):
            approx = preimage(self.query, Interval(a[i], a[i + 1]), self.domain, eps_vol, max_depth)
            if approx.outer.is_empty:
                continue
            out.append(Cell(approx, b, source=Source(self.query, a[i], a[i + 1])))
        return out

    def __repr__(self):
        if self.form == LEVEL_SET:
            return f"PiecewiseConstantPolicy(level_set, {self.query.text!r}, q={self.q})"
        return f"PiecewiseConstantPolicy({self.form}, cells={len(self.cells)})"

    # -- serialization ------------------------------------------------------
    def to_dict(self) -> dict:
        if self.form == LEVEL_SET:
            d = {"form": LEVEL_SET, "query": self.query.text,
                 "breakpoints": list(self.breakpoints), "values": list(self.values)}
        else:
            d = {"form": self.form, "cells": [_cell_to_dict(c) for c in self.cells]}
        if self.warnings:
            d["warnings"] = list(self.warnings)
        return d

    @classmethod
    def from_dict(cls, d: dict, domain: DomainSpec, eps_vol: float | None = None,
                  max_depth: int = 40) -> "PiecewiseConstantPolicy":
        form = d.get("form")
        n = domain.dim
        warnings = d.get("warnings", ())
        if form == LEVEL_SET:
            return cls.level_set(parse_query(d["query"], n), domain, d["breakpoints"], d["values"],
                                 warnings)
        if form not in (EXPLICIT, HYBRID):
            raise PolicyError(f"unknown policy form {form!r}")
        cells = [_cell_from_dict(c, domain, eps_vol, max_depth) for c in d["cells"]]
        return cls(form, domain, cells=cells, warnings=warnings)


def _cell_to_dict(c: Cell) -> dict:
    d = {}
    if c.is_raw:
        d["query"] = c.query.text
    else:
        d["value"] = c.value
    if c.source is not None:
        d["source"] = {"query": c.source.query.text, "lo": c.source.lo, "hi": c.source.hi}
    else:
        d["boxes"] = c.region.inner.to_list()
        if not c.region.boundary.is_empty:
            d["boundary"] = c.region.boundary.to_list()
    return d


def _cell_from_dict(d: dict, domain: DomainSpec, eps_vol, max_depth) -> Cell:
    n = domain.dim
    if "source" in d:
        s = d["source"]
        sq = parse_query(s["query"], n)
        region = preimage(sq, Interval(float(s["lo"]), float(s["hi"])), domain, eps_vol, max_depth)
        source = Source(sq, float(s["lo"]), float(s["hi"]))
    else:
        inner = BoxUnion.from_boxes(d["boxes"], dim=n)
        boundary = BoxUnion.from_boxes(d.get("boundary", []), dim=n)
        region = SetApprox(inner, boundary)
        source = None
    if "query" in d:
        return Cell(region, query=parse_query(d["query"], n), source=source)
    return Cell(region, float(d["value"]), source=source)


# -- evaluation ---------------------------------------------------------------

def _half_open_member(lo, hi, x, dom_hi):
    # lo <= x < hi, with the upper face included where it lies on the domain boundary
    upper = (x < hi) | ((x == hi) & (hi >= dom_hi))
    return np.all((lo <= x) & upper, axis=1)


def apply_policy(policy: PiecewiseConstantPolicy, x) -> float:
    """Released value at ``x``; raises :class:`PolicyError` outside the domain."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != policy.dim:
        raise DimensionError(f"point has dimension {x.shape[0]}, policy has {policy.dim}")
    if not policy.domain.domain.contains_point(x):
        raise PolicyError(f"point {x.tolist()} is outside the domain")
    if policy.form == LEVEL_SET:
        y = policy.query.eval_point(x)
        i = bisect.bisect_right(policy.breakpoints, y) - 1
        return policy.values[min(max(i, 0), len(policy.values) - 1)]
    dom_hi = policy.domain.domain.hi.max(axis=0)
    for layer in ("inner", "boundary"):
        for closed in (False, True):
            for c in policy.cells:
                s = getattr(c.region, layer)
                if s.is_empty:
                    continue
                if closed:
                    hit = s.contains_point(x)
                else:
                    hit = bool(_half_open_member(s.lo, s.hi, x, dom_hi).any())
                if hit:
                    return c.query.eval_point(x) if c.is_raw else c.value
    raise PolicyError(f"no cell covers {x.tolist()}")


def classify_points(policy: PiecewiseConstantPolicy, pts) -> tuple[np.ndarray, np.ndarray]:
    """Cell index (0-based, -1 outside) and released value for many points.

    Level-set policies evaluate the query; explicit policies paint each cell's
    boxes onto the points, inner boxes before boundary boxes and earlier cells
    before later ones.
    """
    pts = np.asarray(pts, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != policy.dim:
        raise DimensionError(f"points must have shape (m, {policy.dim})")
    m = pts.shape[0]
    inside = policy.domain.domain.contains_points(pts)
    idx = np.full(m, -1, dtype=np.int64)
    vals = np.full(m, np.nan)
    if policy.form == LEVEL_SET:
        y = policy.query.eval_points(pts[inside])
        i = np.searchsorted(np.asarray(policy.breakpoints), y, side="right") - 1
        i = np.clip(i, 0, len(policy.values) - 1)
        idx[inside] = i
        vals[inside] = np.asarray(policy.values)[i]
        return idx, vals
    dom_hi = policy.domain.domain.hi.max(axis=0)
    todo = inside.copy()
    for layer in ("inner", "boundary"):
        for k, c in enumerate(policy.cells):
            s = getattr(c.region, layer)
            if s.is_empty or not todo.any():
                continue
            sel = np.flatnonzero(todo)
            hit = _paint(s, pts[sel], dom_hi)
            if not hit.any():
                continue
            got = sel[hit]
            idx[got] = k
            vals[got] = c.query.eval_points(pts[got]) if c.is_raw else c.value
            todo[got] = False
    if todo.any():
        # points on shared closed faces only
        for k, c in enumerate(policy.cells):
            sel = np.flatnonzero(todo)
            if sel.size == 0:
                break
            hit = c.region.outer.contains_points(pts[sel])
            got = sel[hit]
            idx[got] = k
            vals[got] = c.query.eval_points(pts[got]) if c.is_raw else c.value
            todo[got] = False
    return idx, vals


def _paint(s: BoxUnion, pts: np.ndarray, dom_hi) -> np.ndarray:
    """Half-open membership of points in a box union, via per-axis sorting.

    Each box is mapped to the run of points it can contain along the first
    axis, so the work is proportional to the matches rather than to
    boxes times points.
    """
    m = pts.shape[0]
    hit = np.zeros(m, dtype=bool)
    order = np.argsort(pts[:, 0], kind="stable")
    xs = pts[order, 0]
    lo, hi = s.lo, s.hi
    start = np.searchsorted(xs, lo[:, 0], side="left")
    stop = np.searchsorted(xs, hi[:, 0], side="right")
    counts = stop - start
    nz = counts > 0
    if not nz.any():
        return hit
    box_ids = np.repeat(np.flatnonzero(nz), counts[nz])
    offs = np.arange(box_ids.size) - np.repeat(np.cumsum(counts[nz]) - counts[nz], counts[nz])
    pid = order[np.repeat(start[nz], counts[nz]) + offs]
    ok = np.zeros(box_ids.size, dtype=bool)
    # process in blocks to bound memory
    step = 1 << 22
    for a in range(0, box_ids.size, step):
        b_ = box_ids[a:a + step]
        p_ = pts[pid[a:a + step]]
        blo, bhi = lo[b_], hi[b_]
        upper = (p_ < bhi) | ((p_ == bhi) & (bhi >= dom_hi))
        ok[a:a + step] = np.all((blo <= p_) & upper, axis=1)
    hit[pid[ok]] = True
    return hit


def image_of_cells(policy: PiecewiseConstantPolicy) -> list[Interval]:
    """Image of the domain under the query, one interval per level-set bin."""
    if policy.form != LEVEL_SET:
        raise PolicyError("only level-set policies have a query image")
    img = image_interval(policy.query, policy.domain)
    a = policy.breakpoints
    return [Interval(max(a[i], img.lo), min(a[i + 1], img.hi)) for i in range(len(policy.values))
            if max(a[i], img.lo) <= min(a[i + 1], img.hi)]
