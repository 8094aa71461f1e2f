"""Small arithmetic expression language for generating grid fields.

Grammar (lowest to highest precedence)::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("-" | "+") unary | power
    power := atom ("^" unary)?          right associative, binds tighter than unary minus
    atom  := number | name | name "(" expr ("," expr)* ")" | "(" expr ")"

Variables are x, y, z; constants pi and inf. Evaluation is vectorized with numpy.
"""
from __future__ import annotations

import re
from typing import Callable

import numpy as np


class ExprError(ValueError):
    pass


_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(\*\*|[-+*/^(),]))")

VARIABLES = ("x", "y", "z")
CONSTANTS = {"pi": np.pi, "inf": np.inf}


def _fold(op, args):
    out = args[0]
    for a in args[1:]:
        out = op(out, a)
    return out


FUNCTIONS: dict = {
    "abs": (1, 1, np.abs),
    "exp": (1, 1, np.exp),
    "sin": (1, 1, np.sin),
    "cos": (1, 1, np.cos),
    "sqrt": (1, 1, np.sqrt),
    "log": (1, 1, np.log),
    "min": (2, None, lambda *a: _fold(np.minimum, a)),
    "max": (2, None, lambda *a: _fold(np.maximum, a)),
}


def _tokenize(text: str) -> list:
    pos, out = 0, []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExprError(f"unexpected character at position {pos}: {text[pos:pos + 10]!r}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num)))
        elif name is not None:
            out.append(("name", name))
        else:
            out.append(("op", "^" if op == "**" else op))
        pos = m.end()
    out.append(("end", None))
    return out


class _Parser:
    def __init__(self, text: str, dim: int):
        self.toks = _tokenize(text)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if kind is not None and (tok[0] != kind or (value is not None and tok[1] != value)):
            want = value if value is not None else kind
            raise ExprError(f"expected {want!r}, found {tok[1]!r}")
        self.i += 1
        return tok

    def is_op(self, *ops) -> bool:
        tok = self.peek()
        return tok[0] == "op" and tok[1] in ops

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            raise ExprError(f"trailing input at {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.is_op("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = (lambda a, b: lambda v: a(v) + b(v))(node, rhs) if op == "+" else \
                (lambda a, b: lambda v: a(v) - b(v))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.is_op("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = (lambda a, b: lambda v: a(v) * b(v))(node, rhs) if op == "*" else \
                (lambda a, b: lambda v: a(v) / b(v))(node, rhs)
        return node

    def unary(self):
        if self.is_op("-"):
            self.take()
            inner = self.unary()
            return lambda v: -inner(v)
        if self.is_op("+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.is_op("^"):
            self.take()
            ex = self.unary()
            return lambda v: np.power(base(v), ex(v))
        return base

    def atom(self):
        kind, val = self.peek()
        if kind == "num":
            self.take()
            return lambda v, c=val: c
        if kind == "op" and val == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        if kind == "name":
            self.take()
            if self.is_op("("):
                return self.call(val)
            if val in VARIABLES:
                k = VARIABLES.index(val)
                if k >= self.dim:
                    raise ExprError(f"variable {val!r} needs dimension > {self.dim}")
                return lambda v, k=k: v[k]
            if val in CONSTANTS:
                return lambda v, c=CONSTANTS[val]: c
            raise ExprError(f"unknown name {val!r}")
        if kind == "end":
            raise ExprError("unexpected end of expression")
        raise ExprError(f"unexpected token {val!r}")

    def call(self, name: str):
        if name not in FUNCTIONS:
            raise ExprError(f"unknown function {name!r}")
        lo, hi, fn = FUNCTIONS[name]
        self.take("op", "(")
        args = [self.expr()]
        while self.is_op(","):
            self.take()
            args.append(self.expr())
        self.take("op", ")")
        if len(args) < lo or (hi is not None and len(args) > hi):
            raise ExprError(f"{name} takes {lo}{'' if hi == lo else '+'} argument(s), got {len(args)}")
        return lambda v: fn(*[a(v) for a in args])


def expr_dimension(text: str) -> int:
    """Smallest dimension that covers the variables used (at least 1)."""
    names = {tok[1] for tok in _tokenize(text) if tok[0] == "name"}
    used = [VARIABLES.index(v) + 1 for v in VARIABLES if v in names]
    return max(used, default=1)


def compile_expr(text: str, dim: int) -> Callable:
    """Return f(*coords) evaluating the expression on broadcastable arrays."""
    if not 1 <= dim <= 3:
        raise ExprError("dimension must be 1, 2 or 3")
    node = _Parser(text, dim).parse()

    def f(*coords):
        if len(coords) != dim:
            raise ExprError(f"expected {dim} coordinates")
        arrs = [np.asarray(c, dtype=float) for c in coords]
        with np.errstate(all="ignore"):
            out = node(arrs)
        return np.broadcast_to(np.asarray(out, dtype=float), np.broadcast(*arrs).shape).copy()

    return f
