"""Recursive-descent parser for the query grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := base ('^' integer)?
    base   := number | 'x' index | '(' expr ')' | '-' base

Whitespace is insignificant. Note that ``-x1^2`` parses as ``(-x1)^2``
because unary minus binds inside ``base``.
"""
from __future__ import annotations

import re

from .expr import BinOp, Const, Neg, Pow, Query, Var

_TOKEN = re.compile(r"\s*(?:(\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
                    r"|(x\d+)|([-+*/^()]))")


class QuerySyntaxError(ValueError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


def _tokenize(text: str):
    pos = 0
    toks = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if not m:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise QuerySyntaxError(f"unexpected character {text[start]!r}", start)
        kind = "num" if m.group(1) else "var" if m.group(2) else "op"
        toks.append((kind, m.group(m.lastindex), m.start(m.lastindex)))
        pos = m.end()
    toks.append(("end", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text: str):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            raise QuerySyntaxError(f"expected {value!r}, found {t[1] or 'end of input'!r}", t[2])

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self):
        node = self.base()
        if self.peek()[1] == "^":
            self.take()
            t = self.take()
            if t[0] != "num" or not t[1].isdigit():
                raise QuerySyntaxError("exponent must be a non-negative integer", t[2])
            node = Pow(node, int(t[1]))
        return node

    def base(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val))
        if kind == "var":
            idx = int(val[1:])
            if idx < 1:
                raise QuerySyntaxError("variable indices start at 1", pos)
            return Var(idx - 1)
        if val == "(":
            node = self.expr()
            self.expect(")")
            return node
        if val == "-":
            return Neg(self.base())
        raise QuerySyntaxError(f"unexpected {val or 'end of input'!r}", pos)


def parse_query(text: str, dim: int) -> Query:
    """Parse ``text`` into a :class:`Query` over R^dim.

    Raises :class:`QuerySyntaxError` with a character position, or
    :class:`IndexError` when a variable index exceeds ``dim``.
    """
    p = _Parser(text)
    node = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise QuerySyntaxError(f"unexpected {val!r}", pos)
    return Query(node, dim, text=text.strip())
