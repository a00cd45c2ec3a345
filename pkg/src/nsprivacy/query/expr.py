"""Scalar query expressions f: R^n -> R.

An expression tree supports pointwise evaluation, vectorized evaluation,
interval bounds over batches of boxes, and symbolic differentiation.
Polynomials of degree at most two without cross terms are recognized
structurally and get exact box images: affine ``a.x + c`` and separable
quadratics ``sum(d_i x_i^2 + a_i x_i) + c``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np


class QueryDomainError(ArithmeticError):
    """Division by an expression whose range contains zero."""


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # zero-based


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * /
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exp: int


Node = Union[Const, Var, Neg, BinOp, Pow]

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2}


def fold(node: Node) -> Node:
    """Constant folding and removal of trivial identities."""
    if isinstance(node, (Const, Var)):
        return node
    if isinstance(node, Neg):
        a = fold(node.arg)
        if isinstance(a, Const):
            return Const(-a.value)
        if isinstance(a, Neg):
            return a.arg
        return Neg(a)
    if isinstance(node, Pow):
        b = fold(node.base)
        if node.exp == 0:
            return Const(1.0)
        if node.exp == 1:
            return b
        if isinstance(b, Const):
            return Const(b.value ** node.exp)
        return Pow(b, node.exp)
    l, r = fold(node.left), fold(node.right)
    op = node.op
    if isinstance(l, Const) and isinstance(r, Const):
        if op == "+":
            return Const(l.value + r.value)
        if op == "-":
            return Const(l.value - r.value)
        if op == "*":
            return Const(l.value * r.value)
        if r.value == 0:
            raise QueryDomainError("division by the constant zero")
        return Const(l.value / r.value)
    if op == "+":
        if _is(l, 0.0):
            return r
        if _is(r, 0.0):
            return l
    elif op == "-":
        if _is(r, 0.0):
            return l
        if _is(l, 0.0):
            return fold(Neg(r))
    elif op == "*":
        if _is(l, 0.0) or _is(r, 0.0):
            return Const(0.0)
        if _is(l, 1.0):
            return r
        if _is(r, 1.0):
            return l
    elif op == "/":
        if _is(r, 0.0):
            raise QueryDomainError("division by the constant zero")
        if _is(l, 0.0):
            return Const(0.0)
        if _is(r, 1.0):
            return l
    return BinOp(op, l, r)


def _is(node, v):
    return isinstance(node, Const) and node.value == v


def to_text(node: Node, parent: int = 0) -> str:
    """Render in the query grammar; the output parses back to the same tree."""
    if isinstance(node, Const):
        v = node.value
        s = repr(float(v)) if v != int(v) or abs(v) >= 1e15 else str(int(v))
        if v < 0:
            return f"(0 - {s[1:]})" if parent else s
        return s
    if isinstance(node, Var):
        return f"x{node.index + 1}"
    if isinstance(node, Neg):
        return f"-({to_text(node.arg)})"
    if isinstance(node, Pow):
        return f"({to_text(node.base)})^{node.exp}"
    p = _PREC[node.op]
    right_p = p + 1 if node.op in "-/" else p
    s = f"{to_text(node.left, p)} {node.op} {to_text(node.right, right_p)}"
    return f"({s})" if p < parent else s


# -- polynomial recognition -------------------------------------------------

def _poly(node: Node):
    """Polynomial of degree <= 2 as {sorted var tuple: coeff}, or None."""
    if isinstance(node, Const):
        return {(): node.value}
    if isinstance(node, Var):
        return {(node.index,): 1.0}
    if isinstance(node, Neg):
        p = _poly(node.arg)
        return None if p is None else {k: -v for k, v in p.items()}
    if isinstance(node, Pow):
        p = _poly(node.base)
        if p is None:
            return None
        out = {(): 1.0}
        for _ in range(node.exp):
            out = _pmul(out, p)
            if out is None:
                return None
        return out
    l, r = _poly(node.left), _poly(node.right)
    if l is None or r is None:
        return None
    if node.op == "+":
        return _padd(l, r, 1.0)
    if node.op == "-":
        return _padd(l, r, -1.0)
    if node.op == "*":
        return _pmul(l, r)
    if set(r) == {()} and r[()] != 0:
        return {k: v / r[()] for k, v in l.items()}
    return None


def _padd(a, b, s):
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, 0.0) + s * v
    return out


def _pmul(a, b):
    out = {}
    for ka, va in a.items():
        for kb, vb in b.items():
            k = tuple(sorted(ka + kb))
            if len(k) > 2:
                return None
            out[k] = out.get(k, 0.0) + va * vb
    return out


# -- interval arithmetic on batches of boxes --------------------------------

def _ibounds(node: Node, lo: np.ndarray, hi: np.ndarray):
    k = lo.shape[0]
    if isinstance(node, Const):
        v = np.full(k, node.value)
        return v, v
    if isinstance(node, Var):
        return lo[:, node.index], hi[:, node.index]
    if isinstance(node, Neg):
        a, b = _ibounds(node.arg, lo, hi)
        return -b, -a
    if isinstance(node, Pow):
        a, b = _ibounds(node.base, lo, hi)
        p = node.exp
        pa, pb = a ** p, b ** p
        if p % 2:
            return pa, pb
        low = np.where(a >= 0, pa, np.where(b <= 0, pb, 0.0))
        return low, np.maximum(pa, pb)
    a1, b1 = _ibounds(node.left, lo, hi)
    a2, b2 = _ibounds(node.right, lo, hi)
    if node.op == "+":
        return a1 + a2, b1 + b2
    if node.op == "-":
        return a1 - b2, b1 - a2
    if node.op == "/":
        if np.any((a2 <= 0) & (b2 >= 0)):
            raise QueryDomainError("divisor range contains zero")
        a2, b2 = 1.0 / b2, 1.0 / a2
    c = np.stack([a1 * a2, a1 * b2, b1 * a2, b1 * b2])
    return c.min(axis=0), c.max(axis=0)


def _eval(node: Node, x: np.ndarray):
    """Vectorized evaluation; ``x`` has shape (m, n)."""
    if isinstance(node, Const):
        return np.full(x.shape[0], node.value)
    if isinstance(node, Var):
        return x[:, node.index]
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, Pow):
        return _eval(node.base, x) ** node.exp
    a, b = _eval(node.left, x), _eval(node.right, x)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if np.any(b == 0):
        raise QueryDomainError("division by zero")
    return a / b


def _eval1(node: Node, x) -> float:
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return float(x[node.index])
    if isinstance(node, Neg):
        return -_eval1(node.arg, x)
    if isinstance(node, Pow):
        return _eval1(node.base, x) ** node.exp
    a, b = _eval1(node.left, x), _eval1(node.right, x)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if b == 0:
        raise QueryDomainError("division by zero")
    return a / b


def derivative(node: Node, i: int) -> Node:
    """Symbolic partial derivative with respect to variable ``i`` (zero-based)."""
    if isinstance(node, Const):
        return Const(0.0)
    if isinstance(node, Var):
        return Const(1.0 if node.index == i else 0.0)
    if isinstance(node, Neg):
        return fold(Neg(derivative(node.arg, i)))
    if isinstance(node, Pow):
        inner = BinOp("*", Const(float(node.exp)), Pow(node.base, node.exp - 1))
        return fold(BinOp("*", inner, derivative(node.base, i)))
    dl, dr = derivative(node.left, i), derivative(node.right, i)
    l, r = node.left, node.right
    if node.op in "+-":
        return fold(BinOp(node.op, dl, dr))
    if node.op == "*":
        return fold(BinOp("+", BinOp("*", dl, r), BinOp("*", l, dr)))
    num = BinOp("-", BinOp("*", dl, r), BinOp("*", l, dr))
    return fold(BinOp("/", num, Pow(r, 2)))


class Query:
    """A parsed scalar query over R^dim.

    ``kind`` is ``"constant"``, ``"affine"``, ``"quadratic"`` (separable, no
    cross terms) or ``"general"``. For the first three, ``linear``, ``quad``
    and ``const`` hold the coefficients and :meth:`bounds` is exact.
    """

    def __init__(self, root: Node, dim: int, text: str | None = None):
        if dim < 1:
            raise ValueError("dim must be positive")
        self.root = fold(root)
        self.dim = dim
        self._check_vars(self.root)
        self.text = text if text is not None else to_text(self.root)
        self.linear = self.quad = None
        self.const = 0.0
        self.kind = "general"
        poly = _poly(self.root)
        if poly is not None and all(len(k) < 2 or k[0] == k[1] for k in poly):
            lin = np.zeros(dim)
            quad = np.zeros(dim)
            for k, v in poly.items():
                if len(k) == 1:
                    lin[k[0]] += v
                elif len(k) == 2:
                    quad[k[0]] += v
            self.linear, self.quad, self.const = lin, quad, float(poly.get((), 0.0))
            if np.any(quad != 0):
                self.kind = "quadratic"
            elif np.any(lin != 0):
                self.kind = "affine"
            else:
                self.kind = "constant"
        self._grad = None

    def _check_vars(self, node):
        if isinstance(node, Var):
            if not 0 <= node.index < self.dim:
                raise IndexError(f"variable x{node.index + 1} out of range for dimension {self.dim}")
        elif isinstance(node, Neg):
            self._check_vars(node.arg)
        elif isinstance(node, Pow):
            self._check_vars(node.base)
        elif isinstance(node, BinOp):
            self._check_vars(node.left)
            self._check_vars(node.right)

    def __repr__(self):
        return f"Query({self.text!r}, dim={self.dim}, kind={self.kind!r})"

    def __str__(self):
        return self.text

    @property
    def is_fast_path(self) -> bool:
        return self.kind != "general"

    def eval_point(self, x) -> float:
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        if x.shape[0] != self.dim:
            raise ValueError(f"point has dimension {x.shape[0]}, query expects {self.dim}")
        return float(_eval1(self.root, x.tolist()))

    def eval_points(self, pts) -> np.ndarray:
        pts = np.asarray(pts, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] != self.dim:
            raise ValueError(f"points must have shape (m, {self.dim})")
        return np.asarray(_eval(self.root, pts), dtype=np.float64)

    def bounds(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Enclosure of f over each box; exact for the polynomial fast paths."""
        lo = np.asarray(lo, dtype=np.float64)
        hi = np.asarray(hi, dtype=np.float64)
        if self.kind == "general":
            return _ibounds(self.root, lo, hi)
        a, d = self.linear, self.quad
        vlo, vhi = d * lo * lo + a * lo, d * hi * hi + a * hi
        tmin, tmax = np.minimum(vlo, vhi), np.maximum(vlo, vhi)
        nz = d != 0
        if np.any(nz):
            xs = np.zeros_like(a)
            xs[nz] = -a[nz] / (2.0 * d[nz])
            inside = nz & (lo <= xs) & (xs <= hi)
            vs = d * xs * xs + a * xs
            tmin = np.where(inside, np.minimum(tmin, vs), tmin)
            tmax = np.where(inside, np.maximum(tmax, vs), tmax)
        return tmin.sum(axis=1) + self.const, tmax.sum(axis=1) + self.const

    def derivative(self, i: int) -> "Query":
        return Query(derivative(self.root, i), self.dim)

    def gradient(self) -> list["Query"]:
        if self._grad is None:
            self._grad = [self.derivative(i) for i in range(self.dim)]
        return self._grad
