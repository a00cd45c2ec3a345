"""Pure-Python/numpy versions of the compiled geometry kernels.

Used when the extension module is unavailable or when
``NSPRIVACY_PURE_PYTHON=1`` is set. Results match :mod:`nsprivacy._ckernels`.
"""
import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components


def _measure_rec(lo, hi, d):
    if lo.shape[0] == 0:
        return 0.0
    if d == lo.shape[1] - 1:
        order = np.lexsort((np.arange(lo.shape[0]), lo[:, d]))
        a = lo[order, d]
        b = hi[order, d]
        total = 0.0
        cur_lo, cur_hi = a[0], b[0]
        for x, y in zip(a[1:], b[1:]):
            if x > cur_hi:
                total += cur_hi - cur_lo
                cur_lo, cur_hi = x, y
            elif y > cur_hi:
                cur_hi = y
        return float(total + (cur_hi - cur_lo))
    coords = np.sort(np.concatenate([lo[:, d], hi[:, d]]))
    total = 0.0
    for a, b in zip(coords[:-1], coords[1:]):
        if b <= a:
            continue
        mask = (lo[:, d] <= a) & (hi[:, d] >= b)
        if mask.any():
            total += (b - a) * _measure_rec(lo[mask], hi[mask], d + 1)
    return total


def union_measure(lo, hi):
    """Lebesgue measure of a union of closed boxes given as (k, n) corner arrays."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    if lo.shape[0] == 0:
        return 0.0
    keep = np.all(hi > lo, axis=1)
    return float(_measure_rec(lo[keep], hi[keep], 0))


def max_box_distance(lo, hi, order, ub, best):
    """Largest corner-to-corner distance over box pairs, pruned by ``ub``."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    order = np.asarray(order, dtype=np.int64)
    ub = np.asarray(ub, dtype=np.float64)
    best2 = best * best if best > 0 else 0.0
    bi = bj = -1
    for a, i in enumerate(order):
        if ub[i] * ub[i] <= best2:
            break
        rest = order[a:]
        rest = rest[ub[rest] * ub[rest] > best2]
        if rest.size == 0:
            continue
        t = np.maximum(hi[i] - lo[rest], hi[rest] - lo[i])
        s = np.einsum("ij,ij->i", t, t)
        m = int(np.argmax(s))
        if s[m] > best2:
            best2 = float(s[m])
            bi, bj = int(i), int(rest[m])
    return float(np.sqrt(best2)), bi, bj


def touching_components(lo, hi):
    """Component labels of closed boxes under the 'closed boxes intersect' relation."""
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    k = lo.shape[0]
    if k == 0:
        return np.empty(0, dtype=np.int64)
    order = np.lexsort((np.arange(k), lo[:, 0]))
    slo = lo[order]
    shi = hi[order]
    ends = np.searchsorted(slo[:, 0], shi[:, 0], side="right")
    rows, cols = [], []
    for a in range(k):
        if ends[a] <= a + 1:
            continue
        cand = np.arange(a + 1, ends[a])
        hit = np.all((slo[cand] <= shi[a]) & (slo[a] <= shi[cand]), axis=1)
        cols.extend(cand[hit].tolist())
        rows.extend([a] * int(hit.sum()))
    graph = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(k, k))
    _, sorted_labels = connected_components(graph, directed=False)
    raw = np.empty(k, dtype=np.int64)
    raw[order] = sorted_labels
    # renumber by smallest member index, matching the compiled kernel
    first = {}
    out = np.empty(k, dtype=np.int64)
    for i, r in enumerate(raw):
        out[i] = first.setdefault(int(r), len(first))
    return out
