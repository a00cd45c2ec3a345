"""k-anonymization of numeric tables and its non-stochastic leakage.

Columns are generalized entry by entry: an entry is passed through, replaced
by the label of the bin holding it, or suppressed. The uncertain dataset is
the box formed by the column domains over all ``n * m`` entries, so the
conditional range given a release is a product of one interval per entry
and every measure-based quantity splits into a sum over entries.
"""
from __future__ import annotations

import bisect
import csv
import io
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .extreal import INF, NEG_INF, UNBOUNDED, encode, ext_log
from .geometry import BoxUnion, Interval
from .infotheory import ConditionalFamily, family_from_regions
from .query import DomainSpec

SUPPRESSED_LABEL = "*"


class TableError(ValueError):
    pass


class MechanismError(ValueError):
    pass


# -- generalization rules -----------------------------------------------------------

@dataclass(frozen=True)
class Passthrough:
    def __repr__(self):
        return "PASSTHROUGH"


@dataclass(frozen=True)
class Suppress:
    def __repr__(self):
        return "SUPPRESS"


@dataclass(frozen=True)
class Bins:
    """Left-closed bins ``[b_i, b_{i+1})``; the last bin also holds its right end."""

    breakpoints: tuple

    def __init__(self, breakpoints: Iterable[float]):
        bp = tuple(float(b) for b in breakpoints)
        if len(bp) < 2:
            raise MechanismError("bins need at least two breakpoints")
        if any(b <= a for a, b in zip(bp, bp[1:])):
            raise MechanismError("breakpoints must be strictly increasing")
        object.__setattr__(self, "breakpoints", bp)

    def index(self, v: float) -> int:
        i = bisect.bisect_right(self.breakpoints, v) - 1
        return min(max(i, 0), len(self.breakpoints) - 2)

    def interval(self, i: int) -> tuple[float, float]:
        return self.breakpoints[i], self.breakpoints[i + 1]

    def label(self, i: int) -> str:
        # the last bin also holds its upper end, but labels keep one uniform form
        a, b = self.interval(i)
        return f"[{_fmt(a)},{_fmt(b)})"

    def widths_in(self, dom: Interval) -> list[float]:
        """Lengths of the bins clipped to ``dom``, for bins meeting it in more than a point."""
        out = []
        for a, b in zip(self.breakpoints, self.breakpoints[1:]):
            w = min(b, dom.hi) - max(a, dom.lo)
            if w > 0:
                out.append(w)
        return out


PASSTHROUGH = Passthrough()
SUPPRESS = Suppress()
_RULES = (Passthrough, Suppress, Bins)


def _fmt(v: float) -> str:
    return repr(int(v)) if float(v).is_integer() and abs(v) < 1e15 else repr(float(v))


@dataclass(frozen=True)
class GeneralizationScheme:
    """One rule per column."""

    rules: tuple

    def __init__(self, rules: Sequence):
        rules = tuple(rules)
        for r in rules:
            if not isinstance(r, _RULES):
                raise MechanismError(f"unsupported generalization rule {r!r}")
        object.__setattr__(self, "rules", rules)

    def __len__(self):
        return len(self.rules)


# -- tables -------------------------------------------------------------------------

class Table:
    """``n x m`` real entries with one declared domain interval per column."""

    def __init__(self, data, domains: Sequence, columns: Sequence[str] | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise TableError("table data must be two-dimensional")
        doms = [d if isinstance(d, Interval) else Interval(*d) for d in domains]
        if len(doms) != arr.shape[1]:
            raise TableError(f"{arr.shape[1]} columns but {len(doms)} domains")
        for j, d in enumerate(doms):
            if not d.hi > d.lo:
                raise TableError(f"column {j} domain must have positive length")
            bad = np.flatnonzero((arr[:, j] < d.lo) | (arr[:, j] > d.hi) | np.isnan(arr[:, j]))
            if bad.size:
                i = int(bad[0])
                raise TableError(f"entry ({i}, {j}) = {arr[i, j]!r} is outside [{d.lo}, {d.hi}]")
        self.data = arr
        self.domains = tuple(doms)
        self.columns = tuple(columns) if columns is not None else tuple(
            f"c{j + 1}" for j in range(arr.shape[1]))
        if len(self.columns) != arr.shape[1]:
            raise TableError("column names do not match the data")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    def __len__(self):
        return self.data.shape[0]

    def as_domain(self) -> DomainSpec:
        """The uncertain dataset as one box over all entries, row-major."""
        n, _ = self.shape
        lo = [d.lo for d in self.domains] * n
        hi = [d.hi for d in self.domains] * n
        return DomainSpec(BoxUnion.box(lo, hi))


def read_table(source, domains: Sequence) -> Table:
    """Read a CSV table with a header row from a path or a text stream."""
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, newline="") as fh:
            return read_table(fh, domains)
    reader = csv.reader(source)
    try:
        header = next(reader)
    except StopIteration:
        raise TableError("empty CSV") from None
    rows = []
    for line, rec in enumerate(reader, start=2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise TableError(f"line {line}: expected {len(header)} fields, got {len(rec)}")
        try:
            rows.append([float(v) for v in rec])
        except ValueError as exc:
            raise TableError(f"line {line}: {exc}") from None
    if not rows:
        raise TableError("CSV has no data rows")
    return Table(rows, domains, [h.strip() for h in header])


# -- mechanisms -----------------------------------------------------------------------

class Mechanism:
    """Per-entry generalization rules, aligned with the rows of the input."""

    def __init__(self, rules: Sequence[Sequence]):
        grid = tuple(tuple(row) for row in rules)
        if not grid or not grid[0]:
            raise MechanismError("mechanism needs at least one entry")
        m = len(grid[0])
        for row in grid:
            if len(row) != m:
                raise MechanismError("ragged rule grid")
            for r in row:
                if not isinstance(r, _RULES):
                    raise MechanismError(f"rule {r!r} is outside the supported class")
        self.rules = grid

    @property
    def shape(self) -> tuple[int, int]:
        return len(self.rules), len(self.rules[0])

    @classmethod
    def uniform(cls, scheme: GeneralizationScheme, n_rows: int) -> "Mechanism":
        return cls([scheme.rules] * n_rows)

    @classmethod
    def leading_passthrough(cls, scheme: GeneralizationScheme, n_rows: int, k: int) -> "Mechanism":
        """Release the first ``k`` rows verbatim and generalize the rest by ``scheme``.

        When the first ``k`` rows are identical the release is still
        k-anonymous, yet those rows are disclosed exactly.
        """
        if not 1 <= k <= n_rows:
            raise ValueError("need 1 <= k <= n_rows")
        m = len(scheme)
        return cls([(PASSTHROUGH,) * m] * k + [scheme.rules] * (n_rows - k))

    def has_passthrough(self) -> bool:
        return any(isinstance(r, Passthrough) for row in self.rules for r in row)


def _mechanism(table: Table, mech) -> Mechanism:
    if isinstance(mech, GeneralizationScheme):
        mech = Mechanism.uniform(mech, len(table))
    if not isinstance(mech, Mechanism):
        raise MechanismError("expected a GeneralizationScheme or Mechanism")
    if mech.shape != table.shape:
        raise MechanismError(f"mechanism shape {mech.shape} does not match table {table.shape}")
    return mech


@dataclass(frozen=True)
class Release:
    columns: tuple
    rows: tuple

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        w.writerows(self.rows)
        return buf.getvalue()


def anonymize(table: Table, mech) -> Release:
    """Replace each entry by itself, its bin label, or the suppression marker."""
    mech = _mechanism(table, mech)
    rows = []
    for i, rec in enumerate(table.data):
        out = []
        for j, v in enumerate(rec):
            r = mech.rules[i][j]
            if isinstance(r, Passthrough):
                out.append(_fmt(float(v)))
            elif isinstance(r, Suppress):
                out.append(SUPPRESSED_LABEL)
            else:
                out.append(r.label(r.index(float(v))))
        rows.append(tuple(out))
    return Release(table.columns, tuple(rows))


def verify_k(released, k: int) -> tuple[bool, int]:
    """Whether every released tuple occurs at least ``k`` times, and the
    smallest multiplicity."""
    rows = released.rows if isinstance(released, Release) else [tuple(r) for r in released]
    if not rows:
        raise TableError("empty release")
    counts = Counter(rows)
    achieved = min(counts[r] for r in rows)
    return achieved >= k, achieved


# -- leakage analysis ---------------------------------------------------------------------

@dataclass(frozen=True)
class KAnonReport:
    k_achieved: int
    cond_measure: float
    h0: float
    h0_cond: float
    d0: float
    l0: float
    i0: float
    i_star: object
    i_star_count: object
    k: int | None = None

    def is_k_anon(self, k: int | None = None) -> bool:
        k = self.k if k is None else k
        if k is None:
            raise ValueError("no k given")
        return self.k_achieved >= k

    def to_dict(self) -> dict:
        out = {"k_achieved": self.k_achieved}
        if self.k is not None:
            out["k"] = self.k
            out["is_k_anon"] = self.is_k_anon()
        out.update({
            "cond_measure": self.cond_measure,
            "h0": encode(self.h0), "h0_cond": encode(self.h0_cond),
            "d0": encode(self.d0), "l0": encode(self.l0), "i0": encode(self.i0),
            "i_star": "+inf" if self.i_star is UNBOUNDED else self.i_star,
            "i_star_count": "unbounded" if self.i_star is UNBOUNDED else self.i_star_count,
        })
        return out


def _entry_interval(r, v: float, dom: Interval) -> tuple[float, float]:
    if isinstance(r, Passthrough):
        return v, v
    if isinstance(r, Suppress):
        return dom.lo, dom.hi
    a, b = r.interval(r.index(v))
    return max(a, dom.lo), min(b, dom.hi)


def _entry_widths(r, dom: Interval) -> list[float]:
    """Lengths of the conditional ranges this rule can produce."""
    if isinstance(r, Passthrough):
        return [0.0]
    if isinstance(r, Suppress):
        return [dom.hi - dom.lo]
    w = r.widths_in(dom)
    if not w:
        raise MechanismError(f"bins {r.breakpoints} do not cover the column domain")
    return w


def analyze_release(table: Table, mech, k: int | None = None) -> KAnonReport:
    """Leakage of a per-entry mechanism about the whole table.

    ``cond_measure`` is the measure of the conditional range given the
    release of ``table``; ``d0`` and the rest are worst cases over all
    possible tables, computed entry by entry.
    """
    mech = _mechanism(table, mech)
    n, m = table.shape
    h0 = h0c = d0 = 0.0
    log_count = 0.0
    count = 1
    unbounded = False
    widths = []
    for i in range(n):
        for j in range(m):
            r, dom = mech.rules[i][j], table.domains[j]
            a, b = _entry_interval(r, float(table.data[i, j]), dom)
            widths.append(b - a)
            w = _entry_widths(r, dom)
            h0 += math.log(dom.hi - dom.lo)
            h0c += ext_log(max(w))
            d0 += ext_log(min(w))
            if isinstance(r, Passthrough):
                unbounded = True
            else:
                log_count += math.log(len(w))
                count *= len(w)
    cond = float(math.prod(widths))
    _, achieved = verify_k(anonymize(table, mech), 1)
    l0 = INF if d0 == NEG_INF else h0 - d0
    i0 = INF if h0c == NEG_INF else h0 - h0c
    return KAnonReport(
        k_achieved=achieved, cond_measure=cond, h0=h0, h0_cond=h0c, d0=d0, l0=l0, i0=i0,
        i_star=UNBOUNDED if unbounded else log_count,
        i_star_count=UNBOUNDED if unbounded else count, k=k)


def release_family(table: Table, mech, max_cells: int = 4096) -> ConditionalFamily:
    """Conditional family of a mechanism without passthrough entries, one
    product box per possible release. Only for small tables."""
    mech = _mechanism(table, mech)
    if mech.has_passthrough():
        raise MechanismError("passthrough entries have infinitely many conditional ranges")
    n, m = table.shape
    per_entry = []
    for i in range(n):
        for j in range(m):
            r, dom = mech.rules[i][j], table.domains[j]
            if isinstance(r, Suppress):
                per_entry.append([(dom.lo, dom.hi)])
            else:
                per_entry.append([(max(a, dom.lo), min(b, dom.hi))
                                  for a, b in zip(r.breakpoints, r.breakpoints[1:])
                                  if min(b, dom.hi) > max(a, dom.lo)])
    total = math.prod(len(p) for p in per_entry)
    if total > max_cells:
        raise MechanismError(f"{total} possible releases exceed max_cells={max_cells}")
    boxes = [[]]
    for choices in per_entry:
        boxes = [bx + [c] for bx in boxes for c in choices]
    regions = [BoxUnion.from_boxes([bx]) for bx in boxes]
    return family_from_regions(table.as_domain(), regions)
