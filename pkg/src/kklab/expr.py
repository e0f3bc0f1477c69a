"""Arithmetic expression DSL used for field definitions.

Grammar (lowest to highest precedence)::

    expr   := term (("+" | "-") term)*
    term   := unary (("*" | "/") unary)*
    unary  := "-" unary | power
    power  := atom ("^" unary)?
    atom   := NUMBER | NAME | NAME "(" expr ")" | "(" expr ")"

``^`` is right-associative and binds tighter than unary minus, so ``-2^2 == -4``
and ``2^3^2 == 512``.  Expressions are parsed into an immutable tree that can be
printed, evaluated, differentiated symbolically and compiled to a Python callable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import ExpressionError

VARIABLES = ("t", "x", "y", "z")
CONSTANTS = {"pi": math.pi, "e": math.e}
FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt", "tanh")

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4, "atom": 5}


class Node:
    __slots__ = ()

    def __str__(self):
        return to_string(self)


@dataclass(frozen=True)
class Num(Node):
    value: float


@dataclass(frozen=True)
class Name(Node):
    name: str


@dataclass(frozen=True)
class Neg(Node):
    operand: Node


@dataclass(frozen=True)
class BinOp(Node):
    op: str
    left: Node
    right: Node


@dataclass(frozen=True)
class Call(Node):
    func: str
    arg: Node


# ---------------------------------------------------------------------------
# tokenizer / parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            start = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExpressionError(f"unexpected character {src[start]!r}", _byte_offset(src, start))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(src)))
    return tokens


def _byte_offset(src, index):
    return len(src[:index].encode("utf-8"))


class _Parser:
    def __init__(self, src, names):
        self.src = src
        self.names = names
        self.tokens = _tokenize(src)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, expected):
        kind, text, start = self.peek()
        got = "end of input" if kind == "end" else repr(text)
        raise ExpressionError(f"unexpected {got}", _byte_offset(self.src, start), expected)

    def expect(self, text):
        if self.peek()[1] != text or self.peek()[0] != "op":
            self.fail([repr(text)])
        self.advance()

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(["operator", "end of input"])
        return node

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.advance()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.advance()[1]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.peek()[0] == "op" and self.peek()[1] == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.advance()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        kind, text, start = self.peek()
        if kind == "num":
            self.advance()
            return Num(float(text))
        if kind == "name":
            self.advance()
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text in self.names:
                return Name(text)
            raise ExpressionError(f"unknown identifier {text!r}", _byte_offset(self.src, start))
        if kind == "op" and text == "(":
            self.advance()
            node = self.expr()
            self.expect(")")
            return node
        self.fail(["number", "identifier", "function call", "'('", "'-'"])


def parse_expression(src: str, constants: Mapping[str, float] | None = None) -> Node:
    """Parse ``src``; identifiers must be coordinates, ``pi``/``e`` or keys of ``constants``."""
    if not src or not src.strip():
        raise ExpressionError("empty expression", 0, ["expression"])
    names = set(VARIABLES) | set(CONSTANTS) | set(constants or ())
    return _Parser(src, names).parse()


# ---------------------------------------------------------------------------
# printing


def _fmt_num(v):
    r = repr(float(v))
    if r.endswith(".0"):
        r = r[:-2]
    return r


def to_string(node: Node) -> str:
    """Minimal-parenthesis rendering; ``parse(to_string(n)) == n``."""
    return _render(node)[0]


def _render(node):
    if isinstance(node, Num):
        if node.value < 0 or math.isinf(node.value) or math.isnan(node.value):
            # negative literals only arise from folding; keep them atomic
            return f"({_fmt_num(node.value)})", _PREC["atom"]
        return _fmt_num(node.value), _PREC["atom"]
    if isinstance(node, Name):
        return node.name, _PREC["atom"]
    if isinstance(node, Call):
        return f"{node.func}({_render(node.arg)[0]})", _PREC["atom"]
    if isinstance(node, Neg):
        s, p = _render(node.operand)
        # operand of unary minus is parsed at unary level
        if p < _PREC["neg"]:
            s = f"({s})"
        return f"-{s}", _PREC["neg"]
    op = node.op
    prec = _PREC[op]
    ls, lp = _render(node.left)
    rs, rp = _render(node.right)
    if op == "^":
        if lp < _PREC["atom"]:
            ls = f"({ls})"
        if rp < _PREC["neg"]:
            rs = f"({rs})"
        return f"{ls}^{rs}", prec
    if lp < prec:
        ls = f"({ls})"
    if rp <= prec:
        rs = f"({rs})"
    return f"{ls} {op} {rs}", prec


# ---------------------------------------------------------------------------
# evaluation

_MATH = {"sin": math.sin, "cos": math.cos, "exp": math.exp, "log": math.log,
         "sqrt": math.sqrt, "tanh": math.tanh}


def evaluate(node: Node, env: Mapping[str, float]) -> float:
    """Tree-walking evaluator (reference path; slow but simple)."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        if node.name in env:
            return env[node.name]
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        raise ExpressionError(f"unbound identifier {node.name!r}")
    if isinstance(node, Neg):
        return -evaluate(node.operand, env)
    if isinstance(node, Call):
        return _MATH[node.func](evaluate(node.arg, env))
    left = evaluate(node.left, env)
    right = evaluate(node.right, env)
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        return left / right
    return left ** right


def free_names(node: Node) -> set[str]:
    if isinstance(node, Name):
        return {node.name}
    if isinstance(node, Num):
        return set()
    if isinstance(node, (Neg,)):
        return free_names(node.operand)
    if isinstance(node, Call):
        return free_names(node.arg)
    return free_names(node.left) | free_names(node.right)


def _pysrc(node, fn_prefix):
    if isinstance(node, Num):
        return repr(node.value)
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_pysrc(node.operand, fn_prefix)})"
    if isinstance(node, Call):
        return f"{fn_prefix}{node.func}({_pysrc(node.arg, fn_prefix)})"
    op = "**" if node.op == "^" else node.op
    return f"({_pysrc(node.left, fn_prefix)} {op} {_pysrc(node.right, fn_prefix)})"


def compile_expression(node: Node, variables=VARIABLES, constants: Mapping[str, float] | None = None,
                       backend: str = "math") -> Callable:
    """Compile to ``f(*variables)``. ``backend='numpy'`` broadcasts over arrays."""
    ns = {"pi": math.pi, "e": math.e}
    ns.update(constants or {})
    unknown = free_names(node) - set(variables) - set(ns)
    if unknown:
        raise ExpressionError(f"unbound identifier(s) {sorted(unknown)}")
    if backend == "math":
        ns.update({f"_m_{k}": v for k, v in _MATH.items()})
    elif backend == "numpy":
        ns.update({f"_m_{k}": getattr(np, k) for k in FUNCTIONS})
    else:
        raise ValueError(f"unknown backend {backend!r}")
    src = f"lambda {', '.join(variables)}: {_pysrc(node, '_m_')}"
    fn = eval(src, ns)  # noqa: S307 - source generated from a validated tree
    if backend == "numpy" and not free_names(node) & set(variables):
        const = fn

        def fn(*args):
            shape = np.broadcast(*args).shape if args else ()
            return np.full(shape, const(*args), dtype=float)
    return fn


# ---------------------------------------------------------------------------
# symbolic differentiation

ZERO = Num(0.0)
ONE = Num(1.0)


def _is(node, v):
    return isinstance(node, Num) and node.value == v


def _add(a, b):
    if _is(a, 0):
        return b
    if _is(b, 0):
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if _is(b, 0):
        return a
    if _is(a, 0):
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if _is(a, 0) or _is(b, 0):
        return ZERO
    if _is(a, 1):
        return b
    if _is(b, 1):
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if _is(a, 0):
        return ZERO
    if _is(b, 1):
        return a
    return BinOp("/", a, b)


def _neg(a):
    if isinstance(a, Num):
        return Num(-a.value) if a.value != 0 else ZERO
    if isinstance(a, Neg):
        return a.operand
    return Neg(a)


def _pow(a, b):
    if _is(b, 1):
        return a
    if _is(b, 0):
        return ONE
    return BinOp("^", a, b)


def differentiate(node: Node, var: str) -> Node:
    """Exact derivative of ``node`` with respect to ``var`` (light constant folding)."""
    if isinstance(node, Num):
        return ZERO
    if isinstance(node, Name):
        return ONE if node.name == var else ZERO
    if isinstance(node, Neg):
        return _neg(differentiate(node.operand, var))
    if isinstance(node, Call):
        u = node.arg
        du = differentiate(u, var)
        if _is(du, 0):
            return ZERO
        f = node.func
        if f == "sin":
            outer = Call("cos", u)
        elif f == "cos":
            outer = _neg(Call("sin", u))
        elif f == "exp":
            outer = node
        elif f == "log":
            outer = _div(ONE, u)
        elif f == "sqrt":
            outer = _div(Num(0.5), node)
        else:  # tanh
            outer = _sub(ONE, _pow(node, Num(2.0)))
        return _mul(outer, du)
    u, w = node.left, node.right
    du, dw = differentiate(u, var), differentiate(w, var)
    if node.op == "+":
        return _add(du, dw)
    if node.op == "-":
        return _sub(du, dw)
    if node.op == "*":
        return _add(_mul(du, w), _mul(u, dw))
    if node.op == "/":
        return _div(_sub(_mul(du, w), _mul(u, dw)), _pow(w, Num(2.0)))
    # power
    if var not in free_names(w):
        if _is(du, 0):
            return ZERO
        if isinstance(w, Num):
            expo = Num(w.value - 1.0)
        else:
            expo = BinOp("-", w, ONE)
        return _mul(_mul(w, _pow(u, expo)), du)
    # general u^w = exp(w log u)
    return _mul(node, _add(_mul(dw, Call("log", u)), _div(_mul(w, du), u)))


class Expression:
    """A parsed expression bundled with its source and bound constants."""

    def __init__(self, src: str, constants: Mapping[str, float] | None = None):
        self.src = src
        self.constants = dict(constants or {})
        self.tree = parse_expression(src, self.constants)
        self._fn = compile_expression(self.tree, constants=self.constants)

    def __call__(self, t=0.0, x=0.0, y=0.0, z=0.0):
        return self._fn(t, x, y, z)

    def __repr__(self):
        return f"Expression({self.src!r})"

    def __str__(self):
        return to_string(self.tree)

    def derivative(self, var: str) -> Callable:
        return compile_expression(differentiate(self.tree, var), constants=self.constants)

    def vectorized(self) -> Callable:
        return compile_expression(self.tree, constants=self.constants, backend="numpy")

    def depends_on(self, var: str) -> bool:
        return var in free_names(self.tree)
