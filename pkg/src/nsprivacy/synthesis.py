"""Synthesis of optimal piecewise-constant release policies.

``synthesize_relaxed`` quantizes the query output uniformly, which is optimal
for the maximin privacy metric among policies that post-process the query.
``synthesize_optimal`` handles both metrics over general cell partitions:

* P2 (maximin information): fewest cells whose query image has radius at most
  ``1/gamma``. The pulled-back uniform quantizer attains the covering lower
  bound whenever the query image is an interval.
* P1 (leakage): the largest possible smallest cell measure, searched over
  level-set policies with the same number of bins and bin widths capped at
  ``2/gamma``. Breakpoints live on a grid of spacing ``delta_a``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from . import _backend
from .extreal import INF, Bounds, encode
from .geometry import BoxUnion, Interval, covering_number_1d
from .infotheory import InfoReport, conditional_family, info_report
from .policy import EXPLICIT, LEVEL_SET, Cell, PiecewiseConstantPolicy, bin_count, uniform_quantizer
from .query import DomainSpec, Query, image_interval, preimage
from .query.expr import BinOp, Const

P1 = "P1"
P2 = "P2"
DEFAULT_GRID_STEPS = 10_000
# tolerance on the quality constraint, relative to 1/gamma
FEASIBILITY_SLACK = 1e-9


class UnsupportedRelaxationError(ValueError):
    """The relaxed problem only exists for the maximin metric."""


@dataclass(frozen=True)
class SynthesisRequest:
    query: Query
    domain: DomainSpec
    gamma: float
    metric: str = P2
    eps_vol: float | None = None
    delta_a: float | None = None
    max_depth: int = 40
    eps_diam: float | None = None

    def __post_init__(self):
        if not (self.gamma > 0 and math.isfinite(self.gamma)):
            raise ValueError("gamma must be positive and finite")
        if self.metric not in (P1, P2):
            raise ValueError(f"metric must be 'P1' or 'P2', got {self.metric!r}")
        if self.query.dim != self.domain.dim:
            raise ValueError("query and domain dimensions differ")


@dataclass
class PolicyReport:
    policy: PiecewiseConstantPolicy
    q: int
    quality_Q: Bounds
    info: InfoReport
    feasible: bool
    metric: str
    gamma: float
    q_lower_bound: int | None = None
    fibers_connected: bool | None = None
    objective: float | None = None
    warnings: list = field(default_factory=list)

    @property
    def optimal_certified(self) -> bool | None:
        if self.metric != P2 or self.q_lower_bound is None:
            return None
        return self.q == self.q_lower_bound

    def to_dict(self) -> dict:
        out = {
            "metric": self.metric,
            "gamma": self.gamma,
            "q": self.q,
            "feasible": self.feasible,
            "quality_Q": encode(self.quality_Q.value),
            "quality_Q_lo": encode(self.quality_Q.lo),
            "quality_Q_hi": encode(self.quality_Q.hi),
        }
        if self.q_lower_bound is not None:
            out["q_lower_bound"] = self.q_lower_bound
            out["optimal_certified"] = self.optimal_certified
        if self.fibers_connected is not None:
            out["fibers_connected"] = self.fibers_connected
        if self.objective is not None:
            out["min_cell_measure"] = self.objective
        out["warnings"] = list(self.warnings)
        out["policy"] = self.policy.to_dict()
        out["info"] = self.info.to_dict()
        return out


# -- quality ----------------------------------------------------------------

def _witnesses(s: BoxUnion) -> np.ndarray:
    return np.vstack([s.lo, s.hi, 0.5 * (s.lo + s.hi)])


def _deviation(query: Query, cell: Cell) -> Bounds:
    """Enclosure of ``sup |query - release|`` over one cell."""
    if cell.is_raw:
        diff = Query(BinOp("-", query.root, cell.query.root), query.dim)
    else:
        diff = Query(BinOp("-", query.root, Const(cell.value)), query.dim)
    outer, inner = cell.region.outer, cell.region.inner
    if outer.is_empty:
        return Bounds(0.0)
    dlo, dhi = diff.bounds(outer.lo, outer.hi)
    hi = float(np.maximum(np.abs(dlo), np.abs(dhi)).max())
    src = cell.source
    if src is not None and not cell.is_raw and src.query.root == query.root:
        # on the true cell the query stays inside the source interval
        hi = min(hi, max(cell.value - src.lo, src.hi - cell.value))
    lo = 0.0
    if not inner.is_empty:
        lo = float(np.abs(diff.eval_points(_witnesses(inner))).max())
    return Bounds(min(lo, hi), hi)


def quality_Q(policy: PiecewiseConstantPolicy, query: Query, X: DomainSpec | None = None,
              cells: Sequence[Cell] | None = None, eps_vol: float | None = None) -> Bounds:
    """Reciprocal of the worst deviation between the query and the release."""
    if cells is None:
        cells = policy.level_cells(eps_vol) if policy.form == LEVEL_SET else policy.cells
    devs = [_deviation(query, c) for c in cells]
    lo = max(d.lo for d in devs)
    hi = max(d.hi for d in devs)
    return Bounds(1.0 / hi if hi > 0 else INF, 1.0 / lo if lo > 0 else INF)


# -- helpers ------------------------------------------------------------------

def _image(req: SynthesisRequest) -> Interval:
    return image_interval(req.query, req.domain)


def _drop_empty_bins(policy: PiecewiseConstantPolicy, cells: list[Cell]):
    """Merge bins with certainly empty preimage into a neighbor."""
    a = list(policy.breakpoints)
    kept = {c.source.lo for c in cells}
    if len(kept) == len(policy.values):
        return policy
    bps, vals = [a[0]], []
    for i, b in enumerate(policy.values):
        if a[i] in kept:
            if vals:
                bps.append(a[i])
            vals.append(b)
    bps.append(a[-1])
    return PiecewiseConstantPolicy.level_set(policy.query, policy.domain, bps, vals, policy.warnings)


def _count_lower_bound(req: SynthesisRequest) -> int:
    """Covering bound: each cell's image fits in an interval of length 2/gamma."""
    dom = req.domain.domain
    labels = _backend.touching_components(dom.lo, dom.hi)
    pieces = []
    for lab in np.unique(labels):
        sel = labels == lab
        comp = BoxUnion(dom.lo[sel], dom.hi[sel], disjoint=True)
        pieces.append(image_interval(req.query, comp))
    img = BoxUnion([[p.lo] for p in pieces], [[p.hi] for p in pieces])
    if all(p.lo == p.hi for p in pieces) and len({p.lo for p in pieces}) == 1:
        return 1
    return covering_number_1d(img, 1.0 / req.gamma)


def _fibers_connected(req: SynthesisRequest, policy: PiecewiseConstantPolicy) -> bool:
    """Probe fiber connectivity on thin level slabs around bin centers.

    Returns False only when a slab's outer approximation splits into two
    components that each hold inner boxes, which certifies that slab is
    disconnected inside the domain.
    """
    q, dom = req.query, req.domain
    if len(dom.domain) == 1 and q.kind in ("constant", "affine"):
        return True  # level sets of an affine map on a box are convex
    a = policy.breakpoints
    eps = 1e-3 * dom.measure
    for i in range(len(policy.values)):
        w = a[i + 1] - a[i]
        if w <= 0:
            continue
        y = 0.5 * (a[i] + a[i + 1])
        s = preimage(q, Interval(y - 0.05 * w, y + 0.05 * w), dom, eps, 30)
        if s.inner.is_empty:
            continue
        outer = s.outer
        labels = _backend.touching_components(outer.lo, outer.hi)
        inner_labels = set(labels[: len(s.inner)].tolist())
        if len(inner_labels) > 1:
            return False
    return True


def _report(req: SynthesisRequest, policy: PiecewiseConstantPolicy, level_cells=None,
            **extra) -> PolicyReport:
    fam = conditional_family(policy, req.domain, req.eps_vol, req.max_depth, level_cells)
    info = info_report(fam, req.eps_diam)
    cells = [Cell(c.approx, c.value, source=c.sources[0] if len(c.sources) == 1 else None)
             for c in fam.cells]
    cells += [Cell(r.region, query=r.query) for r in fam.raw]
    qual = quality_Q(policy, req.query, req.domain, cells=cells)
    feasible = qual.lo > 0 and 1.0 / qual.lo <= (1.0 / req.gamma) * (1 + FEASIBILITY_SLACK)
    q = policy.q if info.i_star.unbounded else info.i_star.count
    warnings = list(policy.warnings) + extra.pop("warnings", [])
    return PolicyReport(policy=policy, q=q, quality_Q=qual, info=info, feasible=bool(feasible),
                        metric=req.metric, gamma=req.gamma, warnings=warnings, **extra)


def _quantized(req: SynthesisRequest):
    """The quantized policy and its level cells (None when they must be recomputed)."""
    img = _image(req)
    if img.hi <= img.lo:
        c = img.lo
        return PiecewiseConstantPolicy.level_set(req.query, req.domain, [c, c], [c]), None
    quant = uniform_quantizer(img.lo, img.hi, req.gamma)
    pol = PiecewiseConstantPolicy.from_quantizer(req.query, req.domain, quant)
    cells = pol.level_cells(req.eps_vol, req.max_depth)
    merged = _drop_empty_bins(pol, cells)
    return merged, (cells if merged is pol else None)


# -- relaxed problem ---------------------------------------------------------------

def _check_relaxable(req: SynthesisRequest):
    if req.metric != P2:
        raise UnsupportedRelaxationError(
            "the relaxation holds for the maximin metric only; use synthesize_optimal for P1")


def relaxed_policy(req: SynthesisRequest) -> PiecewiseConstantPolicy:
    """The relaxed policy alone, without computing its report."""
    _check_relaxable(req)
    return _quantized(req)[0]


def synthesize_relaxed(req: SynthesisRequest) -> PolicyReport:
    """Uniform quantizer on the query image, composed with the query."""
    _check_relaxable(req)
    pol, cells = _quantized(req)
    return _report(req, pol, cells)


# -- general problem ---------------------------------------------------------------

def synthesize_optimal(req: SynthesisRequest) -> PolicyReport:
    if req.metric == P2:
        return _optimal_p2(req)
    return _optimal_p1(req)


def _optimal_p2(req: SynthesisRequest) -> PolicyReport:
    pol, cells = _quantized(req)
    lb = _count_lower_bound(req)
    connected = _fibers_connected(req, pol)
    warnings = []
    if not connected:
        if cells is None:
            cells = pol.level_cells(req.eps_vol, req.max_depth)
        pol = PiecewiseConstantPolicy(
            EXPLICIT, req.domain, cells=cells,
            warnings=["fibers_disconnected: cells are level-set preimages; "
                      "connectivity condition for relaxation equivalence not met"])
    if pol.q != lb:
        warnings.append(f"non_optimal: {pol.q} cells against a covering lower bound of {lb}")
    return _report(req, pol, cells if pol.form == LEVEL_SET else None, q_lower_bound=lb,
                   fibers_connected=connected, warnings=warnings)


# -- P1: max-min cell measure -----------------------------------------------------------

def _halfspace_volume(lo, hi, a, t):
    """Volume of ``{x in box : a.x <= t}``."""
    a = np.asarray(a, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    w = hi - lo
    # the halfspace is invariant under positive rescaling of (a, t); coefficients whose
    # range over the box is negligible are frozen at the box midpoint
    span = np.abs(a) * w
    top = float(span.max()) if span.size else 0.0
    if top > 0:
        a, t = a / top, t / top
        tiny = (span <= 1e-13 * top) & (a != 0)
        if tiny.any():
            t -= float(np.dot(a[tiny], 0.5 * (lo[tiny] + hi[tiny])))
            a = np.where(tiny, 0.0, a)
    zero = a == 0
    factor = float(np.prod(w[zero])) if zero.any() else 1.0
    a_nz = a[~zero]
    lo_nz, hi_nz = lo[~zero], hi[~zero]
    if a_nz.size == 0:
        return factor * 1.0 if t >= 0 else 0.0
    # substitute y_i = |a_i| * (x_i - corner_i) >= 0 where the corner minimizes a.x
    corner = np.where(a_nz > 0, lo_nz, hi_nz)
    L = np.abs(a_nz) * (hi_nz - lo_nz)
    s = t - float(np.dot(a_nz, corner))
    total = float(L.sum())
    full = float(np.prod(L))
    m = a_nz.size
    scale = factor / float(np.prod(np.abs(a_nz)))
    if s <= 0:
        return 0.0
    if s >= total:
        return full * scale
    flip = s > 0.5 * total
    if flip:
        s = total - s  # complement by the symmetry y -> L - y
    acc = 0.0
    for r in range(m + 1):
        for S in combinations(range(m), r):
            v = s - float(L[list(S)].sum()) if S else s
            if v > 0:
                acc += (-1) ** r * v ** m
    acc /= math.factorial(m)
    vol = full - acc if flip else acc
    return max(0.0, vol) * scale


def _quad1d_length(l, h, d, a, c, t):
    """Length of ``{x in [l, h] : d x^2 + a x + c <= t}``."""
    if d == 0:
        if a == 0:
            return (h - l) if c <= t else 0.0
        r = (t - c) / a
        return max(0.0, min(h, r) - l) if a > 0 else max(0.0, h - max(l, r))
    disc = a * a - 4 * d * (c - t)
    if disc < 0:
        return 0.0 if d > 0 else h - l
    sq = math.sqrt(disc)
    r1, r2 = sorted(((-a - sq) / (2 * d), (-a + sq) / (2 * d)))
    inside = max(0.0, min(h, r2) - max(l, r1))
    return inside if d > 0 else (h - l) - inside


def cdf_table(query: Query, domain: DomainSpec, grid: np.ndarray, max_boxes: int = 200_000):
    """``F[j] = measure{x : query(x) <= grid[j]}`` and whether it is exact.

    Exact for affine queries and for quadratics in one dimension; other
    queries use a fine subdivision with volumes spread evenly over each box's
    image interval.
    """
    dom = domain.domain
    grid = np.asarray(grid, dtype=np.float64)
    if query.kind in ("constant", "affine"):
        F = np.zeros(grid.size)
        for blo, bhi in zip(dom.lo, dom.hi):
            F += np.array([_halfspace_volume(blo, bhi, query.linear, t - query.const) for t in grid])
        return np.maximum.accumulate(F), True
    if query.kind == "quadratic" and query.dim == 1:
        d, a, c = float(query.quad[0]), float(query.linear[0]), query.const
        F = np.zeros(grid.size)
        for blo, bhi in zip(dom.lo[:, 0], dom.hi[:, 0]):
            F += np.array([_quad1d_length(blo, bhi, d, a, c, t) for t in grid])
        return np.maximum.accumulate(F), True
    lo, hi = np.array(dom.lo), np.array(dom.hi)
    step = (grid[-1] - grid[0]) / max(1, grid.size - 1)
    from .query.inversion import _split
    while True:
        flo, fhi = query.bounds(lo, hi)
        wide = (fhi - flo) > step
        if not wide.any() or 2 * lo.shape[0] > max_boxes:
            break
        slo, shi = _split(lo[wide], hi[wide])
        lo = np.vstack([lo[~wide], slo])
        hi = np.vstack([hi[~wide], shi])
    flo, fhi = query.bounds(lo, hi)
    vol = np.prod(hi - lo, axis=1)
    width = fhi - flo
    flat = width <= 0
    F = np.zeros(grid.size)
    if flat.any():
        o = np.argsort(flo[flat])
        cum = np.concatenate([[0.0], np.cumsum(vol[flat][o])])
        F += cum[np.searchsorted(flo[flat][o], grid, side="right")]
    ramp = ~flat
    if ramp.any():
        k = vol[ramp] / width[ramp]
        for ends, sign in ((flo[ramp], 1.0), (fhi[ramp], -1.0)):
            o = np.argsort(ends)
            ck = np.concatenate([[0.0], np.cumsum(k[o])])
            cke = np.concatenate([[0.0], np.cumsum(k[o] * ends[o])])
            j = np.searchsorted(ends[o], grid, side="right")
            F += sign * (ck[j] * grid - cke[j])
    return np.maximum.accumulate(np.maximum(F, 0.0)), False


def _completion_sets(F: np.ndarray, q: int, K: int, t: float):
    """``C[i][j]``: from grid index j, bins i+1..q can reach the end with
    widths at most K steps and measures at least t."""
    G = F.size - 1
    # smallest k with F[k] - F[j] >= t, for every j
    kmin = np.searchsorted(F, F + t, side="left")
    sets = [None] * (q + 1)
    cur = np.zeros(G + 1, dtype=bool)
    cur[G] = True
    sets[q] = cur
    idx = np.arange(G + 1)
    for i in range(q - 1, -1, -1):
        pref = np.concatenate([[0], np.cumsum(cur)])
        a = np.maximum(idx + 1, kmin)
        b = np.minimum(G, idx + K)
        ok = b >= a
        cnt = np.zeros(G + 1, dtype=np.int64)
        cnt[ok] = pref[b[ok] + 1] - pref[a[ok]]
        cur = cnt > 0
        sets[i] = cur
    return sets, kmin


def max_min_breakpoints(F: np.ndarray, q: int, K: int, tol: float = 1e-13):
    """Breakpoint indices ``0 = j_0 < ... < j_q = G`` maximizing the smallest
    bin measure ``F[j_{i+1}] - F[j_i]`` with steps at most K.

    Bisection on the target measure with an exact reachability test; among
    optimal vectors the lexicographically smallest is returned.
    """
    G = F.size - 1
    if q * K < G:
        raise ValueError("width cap too small to cover the range")
    lo_t, hi_t = 0.0, float(F[G] - F[0]) + 1.0
    scale = max(1.0, float(F[G]))
    for _ in range(200):
        if hi_t - lo_t <= tol * scale:
            break
        mid = 0.5 * (lo_t + hi_t)
        if _completion_sets(F, q, K, mid)[0][0][0]:
            lo_t = mid
        else:
            hi_t = mid
    sets, kmin = _completion_sets(F, q, K, lo_t)
    if not sets[0][0]:
        raise RuntimeError("bisection lost feasibility")
    path = [0]
    for i in range(1, q + 1):
        j = path[-1]
        start = max(j + 1, int(kmin[j]))
        window = sets[i][start:min(G, j + K) + 1]
        k = start + int(np.argmax(window))
        path.append(k)
    meas = min(float(F[b] - F[a]) for a, b in zip(path, path[1:]))
    return path, meas


def _optimal_p1(req: SynthesisRequest) -> PolicyReport:
    img = _image(req)
    if img.hi <= img.lo:
        pol = PiecewiseConstantPolicy.level_set(req.query, req.domain, [img.lo, img.lo], [img.lo])
        return _report(req, pol, objective=req.domain.measure)
    R = img.hi - img.lo
    q = bin_count(img.lo, img.hi, req.gamma)
    if q == 1:
        pol = PiecewiseConstantPolicy.level_set(req.query, req.domain, [img.lo, img.hi],
                                                [0.5 * (img.lo + img.hi)])
        return _report(req, pol, objective=req.domain.measure)
    delta = req.delta_a if req.delta_a is not None else R / DEFAULT_GRID_STEPS
    if not delta > 0:
        raise ValueError("delta_a must be positive")
    G0 = max(q, math.ceil(R / delta - 1e-9))
    G = q * math.ceil(G0 / q)
    grid = img.lo + R * np.arange(G + 1) / G
    grid[-1] = img.hi
    K = math.floor((2.0 / req.gamma) * G / R + 1e-9)
    K = max(K, G // q)
    F, exact = cdf_table(req.query, req.domain, grid)
    path, meas = max_min_breakpoints(F, q, K)
    bps = [float(grid[j]) for j in path]
    vals = []
    for a, b in zip(bps, bps[1:]):
        vals.append(0.5 * (a + b))
    pol = PiecewiseConstantPolicy.level_set(req.query, req.domain, bps, vals)
    # Chebyshev centers of the actual cell images
    cells = pol.level_cells(req.eps_vol, req.max_depth)
    centers = []
    for i, (a, b) in enumerate(zip(bps, bps[1:])):
        c = next((c for c in cells if c.source.lo == a), None)
        if c is None:
            centers.append(vals[i])
            continue
        o = c.region.outer
        flo, fhi = req.query.bounds(o.lo, o.hi)
        lo_i, hi_i = max(a, float(flo.min())), min(b, float(fhi.max()))
        centers.append(0.5 * (lo_i + hi_i) if lo_i <= hi_i else vals[i])
    pol = PiecewiseConstantPolicy.level_set(req.query, req.domain, bps, centers)
    pol = _drop_empty_bins(pol, pol.level_cells(req.eps_vol, req.max_depth))
    warnings = [] if exact else ["min_cell_measure is estimated from a subdivision; "
                                 "certified bounds are in info.d0"]
    return _report(req, pol, objective=meas, warnings=warnings)


# -- sweeps ----------------------------------------------------------------------------

@dataclass
class SweepResult:
    rows: list
    istar_nondecreasing: bool
    dmin_nonincreasing: bool

    def table(self) -> list[dict]:
        out = []
        for r in self.rows:
            rep = r["report"]
            if rep is None:
                out.append({"gamma": r["gamma"], "error": r["error"]})
                continue
            info = rep.info
            out.append({
                "gamma": r["gamma"], "q": rep.q,
                "L0": info.l0.value, "L0_lo": info.l0.lo, "L0_hi": info.l0.hi,
                "Istar": info.i_star.i_star,
                "dmin": info.d_min.value, "dmin_lo": info.d_min.lo, "dmin_hi": info.d_min.hi,
                "dmax": info.d_max.value, "dmax_lo": info.d_max.lo, "dmax_hi": info.d_max.hi,
                "Q": rep.quality_Q.value, "Q_lo": rep.quality_Q.lo, "Q_hi": rep.quality_Q.hi,
            })
        return out


def tradeoff_sweep(query: Query, domain: DomainSpec, gammas: Sequence[float], metric: str = P2,
                   **tolerances) -> SweepResult:
    """One optimal policy per utility level, in increasing gamma order."""
    gammas = [float(g) for g in gammas]
    if not gammas:
        raise ValueError("need at least one gamma")
    if any(not g > 0 for g in gammas):
        raise ValueError("gammas must be positive")
    rows = []
    for g in sorted(gammas):
        try:
            rep = synthesize_optimal(SynthesisRequest(query, domain, g, metric, **tolerances))
            rows.append({"gamma": g, "report": rep, "error": None})
        except (ValueError, ArithmeticError) as exc:
            rows.append({"gamma": g, "report": None, "error": str(exc)})
    ok = [r["report"] for r in rows if r["report"] is not None]
    istar = [r.info.i_star.i_star for r in ok]
    dmin = [r.info.d_min for r in ok]
    inc = all(b >= a for a, b in zip(istar, istar[1:]))
    dec = all(b.lo <= a.hi for a, b in zip(dmin, dmin[1:]))
    return SweepResult(rows, inc, dec)


# -- error guarantee for averaged queries -------------------------------------------------

def corner_d_min(lo: float, hi: float, gamma: float) -> float:
    """Half-diameter of the corner cell for the two-entry average over [lo, hi]^2."""
    q = bin_count(lo, hi, gamma)
    return (hi - lo) * math.sqrt(2.0) / q


def error_guarantee_threshold(lo: float, hi: float, target: float, n_x: int = 2) -> dict:
    """Utility levels that keep the adversary's smallest worst-case error at or
    above ``target`` for the average query, from the corner-cell formula.

    The formula is only checked in two dimensions; ``verified`` is False
    otherwise. ``max_gamma`` is the largest gamma meeting the target (fewer
    bins keep cells larger); ``stated_reading`` is the lower threshold
    ``ceil((hi - lo) * sqrt(2) / target) * 2 / (hi - lo)``, which reverses the
    direction.
    """
    span = hi - lo
    max_bins = math.floor(span * math.sqrt(2.0) / target + 1e-12)
    return {
        "max_bins": max_bins,
        "max_gamma": 2.0 * max_bins / span,
        "stated_reading": 2.0 * math.ceil(span * math.sqrt(2.0) / target) / span,
        "verified": n_x == 2,
    }
