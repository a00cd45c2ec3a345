"""Independent reference computations and random instance generators shared
by the property and acceptance suites."""
import math

import numpy as np

from nsprivacy.geometry import BoxUnion
from nsprivacy.infotheory import conditional_family, family_from_regions
from nsprivacy.policy import PiecewiseConstantPolicy
from nsprivacy.query import DomainSpec, image_interval, parse_query


def grid_count(s: BoxUnion) -> int:
    """Measure of an integer-cornered union by counting covered unit cells."""
    if s.is_empty:
        return 0
    lo = np.floor(s.lo.min(axis=0)).astype(int)
    hi = np.ceil(s.hi.max(axis=0)).astype(int)
    axes = [np.arange(a, b) + 0.5 for a, b in zip(lo, hi)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, s.dim)
    inside = np.zeros(len(pts), bool)
    for blo, bhi in zip(s.lo, s.hi):
        inside |= np.all((pts > blo) & (pts < bhi), axis=1)
    return int(inside.sum())


def random_integer_union(rng, dim, k, span=6):
    lo = rng.integers(0, span, size=(k, dim))
    hi = lo + rng.integers(1, 4, size=(k, dim))
    return BoxUnion(lo.astype(float), hi.astype(float))


# -- random families -----------------------------------------------------------------

def random_grid_partition(rng):
    """Domain box cut into a random grid whose cells get values from a small
    pool, so equal values produce disconnected unions. Some cuts are repeated
    to create measure-zero cells."""
    w, h = rng.uniform(0.5, 4.0, size=2)
    xs = np.sort(np.concatenate([[0, w], rng.uniform(0, w, rng.integers(1, 4))]))
    ys = np.sort(np.concatenate([[0, h], rng.uniform(0, h, rng.integers(0, 3))]))
    if rng.random() < 0.15:
        xs = np.sort(np.append(xs, xs[1]))
    regions = [BoxUnion.box([a, c], [b, d]) for a, b in zip(xs, xs[1:]) for c, d in zip(ys, ys[1:])]
    pool = rng.integers(1, len(regions) + 1)
    values = rng.integers(0, pool, size=len(regions)).astype(float)
    return DomainSpec(BoxUnion.box([0, 0], [w, h])), regions, values


def random_level_set(rng):
    """Uniform-width level-set policy of a random affine or diagonal quadratic
    query on a random box, with randomly merged values."""
    n = int(rng.integers(1, 3))
    lo = rng.uniform(-2, 0, n)
    hi = lo + rng.uniform(0.5, 3, n)
    X = DomainSpec(BoxUnion.box(lo, hi))
    coef = np.round(rng.uniform(-2, 2, n), 3)
    if rng.random() < 0.5:
        text = " + ".join(f"{c}*x{i + 1}" for i, c in enumerate(coef))
    else:
        text = " + ".join(f"{abs(c)}*x{i + 1}^2" for i, c in enumerate(coef))
    q = parse_query(text, n)
    img = image_interval(q, X)
    qn = int(rng.integers(1, 6))
    if img.hi <= img.lo:
        qn = 1
    bp = list(np.linspace(img.lo, img.hi, qn + 1))
    vals = [0.5 * (a + b) for a, b in zip(bp, bp[1:])]
    return X, q, bp, vals


def merge_values(rng, values):
    """Random post-processing map on the distinct values."""
    distinct = sorted(set(values))
    labels = rng.integers(0, max(1, len(distinct) - 1) + 1, size=len(distinct)).astype(float)
    g = dict(zip(distinct, labels))
    return [g[v] for v in values]


def family_pair(rng, i):
    """A family and its post-processed version; even instances exact, odd ones
    from preimage approximations."""
    if i % 2 == 0:
        X, regions, values = random_grid_partition(rng)
        merged = merge_values(rng, list(values))
        return family_from_regions(X, regions, values), family_from_regions(X, regions, merged)
    X, q, bp, vals = random_level_set(rng)
    eps = 1e-2 * X.measure
    base = PiecewiseConstantPolicy.level_set(q, X, bp, vals)
    merged = PiecewiseConstantPolicy.level_set(q, X, bp, merge_values(rng, vals))
    return conditional_family(base, X, eps_vol=eps), conditional_family(merged, X, eps_vol=eps)


def random_1d_policy(rng):
    """Values with spacing wider than twice the graph thickness, on cells that
    are random unions of intervals of a partition of [0, L]."""
    k = int(rng.integers(2, 9))
    cuts = np.sort(np.concatenate([[0.0], rng.uniform(0, 10, k - 1), [10.0]]))
    labels = rng.integers(0, rng.integers(1, k + 1), size=k)
    levels = np.cumsum(rng.uniform(0.5, 2.0, size=k))
    cells, values = [], []
    for lab in np.unique(labels):
        idx = np.flatnonzero(labels == lab)
        cells.append(BoxUnion([[cuts[j]] for j in idx], [[cuts[j + 1]] for j in idx]))
        values.append(float(levels[lab]))
    return cells, values


# -- P1 reference --------------------------------------------------------------------

def quad_sublevel_length(intervals, c2, c1, c0, t):
    """Length of ``{x in intervals : c2 x^2 + c1 x + c0 <= t}`` from the roots."""
    roots = np.roots([c2, c1, c0 - t]) if c2 != 0 else (
        np.array([(t - c0) / c1]) if c1 != 0 else np.array([]))
    roots = sorted(r.real for r in np.atleast_1d(roots) if abs(np.imag(r)) < 1e-12)
    total = 0.0
    for a, b in intervals:
        pts = [a] + [r for r in roots if a < r < b] + [b]
        for u, v in zip(pts, pts[1:]):
            m = 0.5 * (u + v)
            if c2 * m * m + c1 * m + c0 <= t:
                total += v - u
    return total


def quad_image(intervals, c2, c1, c0):
    xs = [x for ab in intervals for x in ab]
    if c2 != 0:
        v = -c1 / (2 * c2)
        xs += [v for a, b in intervals if a < v < b]
    ys = [c2 * x * x + c1 * x + c0 for x in xs]
    return min(ys), max(ys)


def exhaustive_max_min(F, q, K):
    """Max over breakpoint index paths ``0 = j_0 < ... < j_q = G`` with steps
    at most K of the smallest increment, by dynamic programming."""
    G = len(F) - 1
    F = np.asarray(F)
    best = np.full(G + 1, -np.inf)
    best[0] = np.inf
    for _ in range(q):
        nxt = np.full(G + 1, -np.inf)
        for j in range(1, G + 1):
            k = np.arange(max(0, j - K), j)
            nxt[j] = np.max(np.minimum(best[k], F[j] - F[k]))
        best = nxt
    return float(best[G])


def random_p1_problem(rng):
    """Random 1-D problem: quadratic or affine query on one to three intervals,
    gamma giving 2..6 bins and a breakpoint grid of at most 200 steps."""
    m = int(rng.integers(1, 4))
    ends = np.sort(rng.uniform(-3, 3, 2 * m))
    intervals = [(float(a), float(b)) for a, b in zip(ends[::2], ends[1::2]) if b - a > 1e-3]
    if not intervals:
        intervals = [(0.0, 1.0)]
    c2 = float(np.round(rng.uniform(-1.5, 1.5), 3)) if rng.random() < 0.7 else 0.0
    c1 = float(np.round(rng.uniform(-2, 2), 3))
    if c2 == 0 and c1 == 0:
        c1 = 1.0
    c0 = float(np.round(rng.uniform(-1, 1), 3))
    ylo, yhi = quad_image(intervals, c2, c1, c0)
    R = yhi - ylo
    q_target = int(rng.integers(2, 7))
    gamma = 2 * (q_target - rng.uniform(0.05, 0.95)) / R
    q = math.ceil(gamma * R / 2 - 1e-12)
    G = q * int(rng.integers(max(2, 20 // q), 200 // q + 1))
    return {"intervals": intervals, "coef": (c2, c1, c0), "gamma": gamma, "q": q, "G": G,
            "image": (ylo, yhi),
            "text": f"{c2}*x1^2 + {c1}*x1 + {c0}" if c2 else f"{c1}*x1 + {c0}"}
