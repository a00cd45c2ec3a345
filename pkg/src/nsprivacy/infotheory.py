"""Non-stochastic information functionals of a domain and a release policy.

All logarithms are natural. Quantities derived from measures or diameters
are returned as :class:`~nsprivacy.extreal.Bounds`, with the lower end from
inner approximations and the upper end from outer ones.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .extreal import DEGENERATE, INF, NEG_INF, UNBOUNDED, Bounds, encode, ext_log
from .geometry import BoxUnion, DimensionError, EmptySetError, Interval, diameter, \
    enclosing_center, measure
from .policy import LEVEL_SET, Cell, PiecewiseConstantPolicy
from .query import DomainSpec, Query, SetApprox, is_nonconstant_on, preimage

# a refinement round divides the volume tolerance of the refined cells by this
_REFINE_FACTOR = 4.0
_MAX_REFINE_ROUNDS = 8
DEFAULT_EPS_DIAM_REL = 2.5e-5


# -- conditional families -----------------------------------------------------

@dataclass
class FamilyCell:
    """Conditional range of X given one report value."""

    value: float
    approx: SetApprox
    sources: tuple = ()
    eps_vol: float = 0.0

    @property
    def measure_bounds(self) -> tuple[float, float]:
        return self.approx.measure_bounds()

    def refinable(self) -> bool:
        return bool(self.sources) and not self.approx.boundary.is_empty


@dataclass(frozen=True)
class RawPiece:
    """A region on which the policy releases a raw query."""

    region: SetApprox
    query: Query
    nonconstant: bool
    singleton_fibers: bool


@dataclass
class ConditionalFamily:
    """The family of conditional ranges induced by a policy, sorted by value."""

    dim: int
    domain: DomainSpec
    cells: list[FamilyCell]
    raw: list[RawPiece] = field(default_factory=list)
    max_depth: int = 40

    def values(self) -> list[float]:
        return [c.value for c in self.cells]

    @property
    def has_nonconstant_piece(self) -> bool:
        return any(r.nonconstant for r in self.raw)

    def refine(self, index: int) -> None:
        """Recompute one cell with a tighter volume tolerance."""
        c = self.cells[index]
        if not c.refinable():
            return
        eps = c.eps_vol / _REFINE_FACTOR
        approx = None
        for src in c.sources:
            a = preimage(src.query, Interval(src.lo, src.hi), self.domain, eps, self.max_depth)
            approx = a if approx is None else approx.union(a)
        self.cells[index] = FamilyCell(c.value, approx, c.sources, eps)


def _singleton_fibers(q: Query, region: SetApprox) -> bool:
    # in one dimension a derivative that keeps one sign makes every fiber a point
    if q.dim != 1:
        return False
    outer = region.outer
    if outer.is_empty:
        return True
    lo, hi = outer.bounding_box()
    g = q.derivative(0)
    glo, ghi = g.bounds(lo[None, :], hi[None, :])
    return bool(glo[0] > 0 or ghi[0] < 0)


def conditional_family(policy: PiecewiseConstantPolicy, X: DomainSpec | None = None,
                       eps_vol: float | None = None, max_depth: int = 40,
                       level_cells: Sequence[Cell] | None = None) -> ConditionalFamily:
    """Group the policy's cells by report value.

    Level-set policies get one preimage per bin (pass ``level_cells`` to reuse
    ones already computed); cells that share a value are merged, as the
    conditional range is the union of everything mapped there.
    """
    X = policy.domain if X is None else X
    if X.dim != policy.dim:
        raise DimensionError(f"policy has dimension {policy.dim}, domain has {X.dim}")
    if eps_vol is None:
        eps_vol = X.default_eps_vol()
    if policy.form == LEVEL_SET:
        cells = level_cells if level_cells is not None else policy.level_cells(eps_vol, max_depth)
    else:
        cells = list(policy.cells)
    groups: dict[float, list[Cell]] = {}
    raw = []
    for c in cells:
        if c.is_raw:
            q = c.query
            if q.kind == "constant":
                groups.setdefault(q.const, []).append(Cell(c.region, q.const))
                continue
            nonconst = is_nonconstant_on(q, c.region.outer)
            raw.append(RawPiece(c.region, q, nonconst, nonconst and _singleton_fibers(q, c.region)))
        else:
            groups.setdefault(c.value, []).append(c)
    fam = []
    for v in sorted(groups):
        members = groups[v]
        approx = members[0].region
        for m in members[1:]:
            approx = approx.union(m.region)
        srcs = tuple(m.source for m in members)
        if any(s is None for s in srcs):
            srcs = ()
        fam.append(FamilyCell(v, approx, srcs, eps_vol))
    if not fam and not raw:
        raise EmptySetError("policy has no realizable report value")
    return ConditionalFamily(X.dim, X, fam, raw, max_depth)


def family_from_regions(domain: DomainSpec, regions: Sequence[BoxUnion],
                        values: Sequence[float] | None = None) -> ConditionalFamily:
    """Family made of exactly known cells. Equal values are merged."""
    if values is None:
        values = list(range(len(regions)))
    pol = PiecewiseConstantPolicy.explicit(domain, regions, values)
    return conditional_family(pol, domain)


# -- entropies ---------------------------------------------------------------

def entropy_h0(X) -> float:
    """log of the measure of the range, in nats; -inf for a null set."""
    if isinstance(X, DomainSpec):
        return ext_log(X.measure)
    return ext_log(measure(X))


def _log_measures(fam: ConditionalFamily):
    lo = [ext_log(c.measure_bounds[0]) for c in fam.cells]
    hi = [ext_log(c.measure_bounds[1]) for c in fam.cells]
    return lo, hi


def conditional_entropy(fam: ConditionalFamily) -> Bounds:
    """Largest log-measure among conditional ranges of positive measure.

    Null cells and the point fibers of raw pieces are negligible for the
    essential supremum; with no positive-measure cell the result is -inf.
    """
    if not fam.cells:
        return Bounds(NEG_INF)
    lo, hi = _log_measures(fam)
    return Bounds(max(lo), max(hi))


def disarray_d0(fam: ConditionalFamily) -> Bounds:
    """Smallest log-measure over every realizable report, null ones included."""
    if fam.has_nonconstant_piece:
        return Bounds(NEG_INF)
    lo, hi = _log_measures(fam)
    return Bounds(min(lo), min(hi))


def _bsub(x: float, b: Bounds) -> Bounds:
    return Bounds(x - b.hi, x - b.lo)


def leakage_L0(X: DomainSpec, fam: ConditionalFamily) -> Bounds:
    return _bsub(entropy_h0(X), disarray_d0(fam))


def info_I0(X: DomainSpec, fam: ConditionalFamily) -> Bounds:
    return _bsub(entropy_h0(X), conditional_entropy(fam))


def transmission_T0(X: DomainSpec, fam: ConditionalFamily):
    """Always the degenerate marker here: a piecewise-constant release has a
    finite, hence null, output range, so the joint range is null too."""
    return DEGENERATE


def transmission_from_ranges(x_range: BoxUnion, y_range: BoxUnion, joint: BoxUnion):
    """``h0(X) + h0(Y) - h0(X,Y)`` for explicit ranges, or the degenerate marker
    when the output range or the joint range is null."""
    if joint.dim != x_range.dim + y_range.dim:
        raise DimensionError("joint dimension must be the sum of the marginal dimensions")
    my, mj = measure(y_range), measure(joint)
    if my == 0 or mj == 0:
        return DEGENERATE
    return ext_log(measure(x_range)) + math.log(my) - math.log(mj)


# -- maximin information -------------------------------------------------------

@dataclass(frozen=True)
class TaxicabResult:
    count: object  # int or UNBOUNDED
    classes: tuple = ()

    @property
    def unbounded(self) -> bool:
        return self.count is UNBOUNDED

    @property
    def i_star(self) -> float:
        return INF if self.unbounded else math.log(self.count)


def maximin_Istar(policy_or_family, X: DomainSpec | None = None) -> TaxicabResult:
    """Taxicab classes of the joint range of (X, policy(X)).

    For a deterministic piecewise-constant release each distinct value is one
    class: cells sharing a value connect through that value, and cells with
    different values share no x. A raw piece that varies on a set of positive
    measure gives infinitely many classes.
    """
    fam = policy_or_family
    if isinstance(fam, PiecewiseConstantPolicy):
        fam = conditional_family(fam, X)
    if fam.has_nonconstant_piece:
        return TaxicabResult(UNBOUNDED)
    classes = tuple((c.value,) for c in fam.cells)
    return TaxicabResult(len(fam.cells), classes)


def _overlap_groups(lo, hi):
    # consecutive runs of overlapping 1-D intervals; positive-length intervals
    # are half-open, points are closed
    k = lo.shape[0]
    order = np.lexsort((hi, lo))
    group = np.empty(k, dtype=np.int64)
    gid = -1
    reach = -math.inf
    reach_closed = False
    for i in order.tolist():
        a, b = lo[i], hi[i]
        joins = a < reach or (a == reach and reach_closed)
        if gid < 0 or not joins:
            gid += 1
            reach, reach_closed = b, a == b
        elif b > reach:
            reach, reach_closed = b, False
        elif b == reach and a == b:
            reach_closed = True
        group[i] = gid
    return group


def taxicab_grid_oracle(joint: BoxUnion) -> int:
    """Taxicab components of a planar box union.

    Boxes whose first-coordinate projections overlap are connected by a
    vertical move, and likewise for the second coordinate. Projections of
    positive length are treated as half-open, so boxes that only touch along
    an edge are not joined; degenerate projections are points.
    """
    if joint.dim != 2:
        raise DimensionError("the grid oracle works on planar sets")
    if joint.is_empty:
        raise EmptySetError("empty joint range")
    k = len(joint)
    parent = list(range(k))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for axis in (0, 1):
        g = _overlap_groups(joint.lo[:, axis], joint.hi[:, axis])
        first = {}
        for i, gi in enumerate(g.tolist()):
            if gi in first:
                ra, rb = find(first[gi]), find(i)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                first[gi] = i
    return len({find(i) for i in range(k)})


def policy_graph(values: Sequence[float], cells: Sequence[BoxUnion], thickness: float = 0.0) -> BoxUnion:
    """Graph ``{(x, b)}`` of a 1-D piecewise-constant policy as planar boxes."""
    lo, hi = [], []
    for b, c in zip(values, cells):
        if c.dim != 1:
            raise DimensionError("policy graphs are built for one-dimensional inputs")
        for l, h in zip(c.lo[:, 0], c.hi[:, 0]):
            lo.append([l, b - thickness])
            hi.append([h, b + thickness])
    return BoxUnion(lo, hi)


# -- Fano-type bounds ------------------------------------------------------------

def fano_bound(h: float, n_x: int) -> float:
    """Lower bound ``Gamma(n/2+1)^(1/n) / sqrt(pi) * exp(h/n)`` on the worst-case
    error of any unbiased estimator; the radius of the ball with log-volume h."""
    if n_x < 1:
        raise ValueError("n_x must be positive")
    if h == NEG_INF:
        return 0.0
    if h == INF:
        return INF
    return math.exp(gammaln(n_x / 2 + 1) / n_x - 0.5 * math.log(math.pi) + h / n_x)


# -- estimator metrics ---------------------------------------------------------------

@dataclass(frozen=True)
class EstimatorMetrics:
    d_min: Bounds
    d_max: Bounds
    center_d_min: float
    center_d_max: float
    centers: tuple = ()


def _half_diam(s: BoxUnion) -> float:
    return 0.0 if s.is_empty else 0.5 * diameter(s)


def _cell_bounds(c: FamilyCell) -> Bounds:
    return Bounds(_half_diam(c.approx.inner), _half_diam(c.approx.outer))


def _raw_bounds(r: RawPiece) -> Bounds:
    if r.singleton_fibers:
        return Bounds(0.0)
    return Bounds(0.0, _half_diam(r.region.outer))


def estimator_metrics(fam: ConditionalFamily, eps_diam: float | None = None,
                      refine: bool = True) -> EstimatorMetrics:
    """Worst-case errors of the optimal unbiased estimator.

    Per cell the optimal estimator achieves half the diameter; ``d_max`` and
    ``d_min`` are the extremes over cells. Cells that could decide an extreme
    are refined until each enclosure is narrower than ``eps_diam``. The
    snapped bounding-box center is reported as a concrete estimator.
    """
    if not fam.cells and not fam.raw:
        raise EmptySetError("all cells are empty")
    if eps_diam is None:
        eps_diam = DEFAULT_EPS_DIAM_REL * diameter(fam.domain.domain)
    bounds = [_cell_bounds(c) for c in fam.cells]
    raw = [_raw_bounds(r) for r in fam.raw]

    def extremes():
        allb = bounds + raw
        lo = [b.lo for b in allb]
        hi = [b.hi for b in allb]
        return Bounds(min(lo), min(hi)), Bounds(max(lo), max(hi))

    d_min, d_max = extremes()
    for _ in range(_MAX_REFINE_ROUNDS if refine else 0):
        todo = set()
        if d_min.width > eps_diam:
            todo |= {i for i, b in enumerate(bounds) if b.lo < d_min.hi and b.width > 0.5 * eps_diam}
        if d_max.width > eps_diam:
            todo |= {i for i, b in enumerate(bounds) if b.hi > d_max.lo and b.width > 0.5 * eps_diam}
        todo = [i for i in sorted(todo) if fam.cells[i].refinable()]
        if not todo:
            break
        for i in todo:
            fam.refine(i)
            bounds[i] = _cell_bounds(fam.cells[i])
        d_min, d_max = extremes()
    centers, radii = [], []
    for c in fam.cells:
        # center chosen inside the inner set when possible so it lies in the true cell
        base = c.approx.inner if not c.approx.inner.is_empty else c.approx.outer
        pt, _ = enclosing_center(base)
        t = np.maximum(np.abs(pt - c.approx.outer.lo), np.abs(c.approx.outer.hi - pt))
        radii.append(float(np.sqrt(np.einsum("ij,ij->i", t, t)).max()))
        centers.append(tuple(pt.tolist()))
    for r in fam.raw:
        radii.append(0.0 if r.singleton_fibers else 2.0 * _half_diam(r.region.outer))
    return EstimatorMetrics(d_min, d_max, min(radii), max(radii), tuple(centers))


# -- report -------------------------------------------------------------------------

@dataclass(frozen=True)
class InfoReport:
    h0: float
    h0_cond: Bounds
    i0: Bounds
    d0: Bounds
    l0: Bounds
    t0: object
    i_star: TaxicabResult
    d_min: Bounds
    d_max: Bounds
    fano_d_max: Bounds
    fano_d_min: Bounds
    center_d_min: float
    center_d_max: float
    n_x: int
    cells: int

    def to_dict(self) -> dict:
        out = {"h0": encode(self.h0)}
        for name in ("h0_cond", "i0", "d0", "l0", "d_min", "d_max", "fano_d_max", "fano_d_min"):
            b = getattr(self, name)
            out[name] = encode(b.value)
            out[name + "_lo"] = encode(b.lo)
            out[name + "_hi"] = encode(b.hi)
        out["t0"] = encode(self.t0)
        out["i_star"] = "+inf" if self.i_star.unbounded else self.i_star.i_star
        out["i_star_count"] = "unbounded" if self.i_star.unbounded else int(self.i_star.count)
        out["center_d_min"] = encode(self.center_d_min)
        out["center_d_max"] = encode(self.center_d_max)
        out["n_x"] = self.n_x
        out["cells"] = self.cells
        return out


def info_report(fam: ConditionalFamily, eps_diam: float | None = None) -> InfoReport:
    X = fam.domain
    n = fam.dim
    h0 = entropy_h0(X)
    hc = conditional_entropy(fam)
    d0 = disarray_d0(fam)
    est = estimator_metrics(fam, eps_diam)
    # refinement may have tightened the cells, so recompute measure-based values
    hc = conditional_entropy(fam)
    d0 = disarray_d0(fam)
    return InfoReport(
        h0=h0, h0_cond=hc, i0=_bsub(h0, hc), d0=d0, l0=_bsub(h0, d0),
        t0=transmission_T0(X, fam), i_star=maximin_Istar(fam),
        d_min=est.d_min, d_max=est.d_max,
        fano_d_max=Bounds(fano_bound(hc.lo, n), fano_bound(hc.hi, n)),
        fano_d_min=Bounds(fano_bound(d0.lo, n), fano_bound(d0.hi, n)),
        center_d_min=est.center_d_min, center_d_max=est.center_d_max,
        n_x=n, cells=len(fam.cells) + len(fam.raw))
