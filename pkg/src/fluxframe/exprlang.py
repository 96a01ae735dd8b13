"""Scalar expression language: parsing, exact differentiation, evaluation.

Expressions are stored as hash-consed DAGs, so structurally equal
subexpressions are the same object and derivative caches are shared.
Evaluation compiles a DAG into straight-line numpy code, vectorized over
points; out-of-domain values come back as NaN and are turned into
``DomainError`` by the scalar entry points.
"""
from __future__ import annotations

import math
import re
import threading
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DomainError, ExprSyntaxError, UnknownIdentifier

FUNCTIONS = ("sqrt", "exp", "ln", "sin", "cos", "abs", "expint")

CONST, VAR, ADD, MUL, DIV, POW, NEG, FN, SOLVE = range(9)


# ---------------------------------------------------------------- coordinates

_IDENT = re.compile(r"[A-Za-z_][A-Za-z_0-9]*\Z")


@dataclass(frozen=True)
class Coords:
    names: tuple

    def __init__(self, names: Iterable[str]):
        names = tuple(names)
        if not names:
            raise ValueError("at least one coordinate is required")
        for nm in names:
            if not isinstance(nm, str) or not _IDENT.match(nm):
                raise ValueError(f"invalid coordinate name {nm!r}")
            if nm in FUNCTIONS:
                raise ValueError(f"coordinate name {nm!r} clashes with a builtin")
        if len(set(names)) != len(names):
            raise ValueError("coordinate names must be distinct")
        object.__setattr__(self, "names", names)

    @property
    def dim(self) -> int:
        return len(self.names)

    def index(self, name_or_index) -> int:
        if isinstance(name_or_index, (int, np.integer)):
            k = int(name_or_index)
            if not 0 <= k < self.dim:
                raise IndexError(f"coordinate index {k} out of range")
            return k
        return self.names.index(name_or_index)

    def extend(self, more: Iterable[str]) -> "Coords":
        return Coords(self.names + tuple(more))

    def __repr__(self):
        return f"Coords({', '.join(self.names)})"


# ---------------------------------------------------------------- DAG nodes

class Node:
    __slots__ = ("op", "args", "value", "_deriv", "_order", "__weakref__")

    def __init__(self, op, args, value):
        self.op = op
        self.args = args
        self.value = value
        self._deriv = {}
        self._order = None

    def __repr__(self):
        return f"Node({to_text(self)})"


_table: dict = {}
_lock = threading.Lock()


def _mk(op, args=(), value=None) -> Node:
    key = (op, value, tuple(id(a) for a in args))
    node = _table.get(key)
    if node is None:
        with _lock:
            node = _table.get(key)
            if node is None:
                node = Node(op, tuple(args), value)
                _table[key] = node
    return node


def const(v: float) -> Node:
    v = float(v)
    if not math.isfinite(v):
        raise DomainError(f"non-finite constant {v}")
    if v == 0.0:
        v = 0.0  # fold -0.0
    return _mk(CONST, (), v)


def var(k: int) -> Node:
    return _mk(VAR, (), int(k))


ZERO = const(0.0)
ONE = const(1.0)


def _is(n: Node, v: float) -> bool:
    return n.op == CONST and n.value == v


def add(a: Node, b: Node) -> Node:
    if a.op == CONST and b.op == CONST:
        return const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    if (b.op == NEG and b.args[0] is a) or (a.op == NEG and a.args[0] is b):
        return ZERO
    return _mk(ADD, (a, b))


def neg(a: Node) -> Node:
    if a.op == CONST:
        return const(-a.value)
    if a.op == NEG:
        return a.args[0]
    return _mk(NEG, (a,))


def sub(a: Node, b: Node) -> Node:
    if a is b:
        return ZERO
    return add(a, neg(b))


def mul(a: Node, b: Node) -> Node:
    if a.op == CONST and b.op == CONST:
        return const(a.value * b.value)
    if b.op == CONST:
        a, b = b, a
    if a.op == CONST:
        if a.value == 0.0:
            return ZERO
        if a.value == 1.0:
            return b
        if a.value == -1.0:
            return neg(b)
        if b.op == MUL and b.args[0].op == CONST:
            return mul(const(a.value * b.args[0].value), b.args[1])
    if a.op == NEG and b.op == NEG:
        return mul(a.args[0], b.args[0])
    if a.op == NEG:
        return neg(mul(a.args[0], b))
    if b.op == NEG:
        return neg(mul(a, b.args[0]))
    return _mk(MUL, (a, b))


def div(a: Node, b: Node) -> Node:
    if _is(a, 0.0) and b.op != CONST:
        return ZERO
    if b.op == CONST:
        if b.value == 0.0:
            raise DomainError("division by the constant 0")
        if a.op == CONST:
            return const(a.value / b.value)
        if b.value == 1.0:
            return a
        if b.value == -1.0:
            return neg(a)
    if a is b:
        return ONE
    if a.op == NEG:
        return neg(div(a.args[0], b))
    if b.op == NEG:
        return neg(div(a, b.args[0]))
    return _mk(DIV, (a, b))


def power(a: Node, b: Node) -> Node:
    if _is(b, 0.0):
        return ONE
    if _is(b, 1.0):
        return a
    if _is(a, 1.0):
        return ONE
    if a.op == CONST and b.op == CONST:
        try:
            v = a.value ** b.value
        except ZeroDivisionError:
            raise DomainError("0 raised to a negative power") from None
        if isinstance(v, complex) or not math.isfinite(v):
            raise DomainError(f"{a.value}^{b.value} is not a finite real")
        return const(v)
    return _mk(POW, (a, b))


_FOLD = {
    "sqrt": lambda x: math.sqrt(x) if x >= 0 else math.nan,
    "exp": math.exp,
    "ln": lambda x: math.log(x) if x > 0 else math.nan,
    "sin": math.sin,
    "cos": math.cos,
    "abs": abs,
    "expint": lambda x: _e1(x),
}


def fn(name: str, a: Node) -> Node:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name}")
    if a.op == CONST:
        try:
            v = _FOLD[name](a.value)
        except OverflowError:
            v = math.nan
        if not math.isfinite(v):
            raise DomainError(f"{name}({a.value}) is outside the domain")
        return const(v)
    return _mk(FN, (a,), name)


def solve_node(A: Sequence[Node], b: Sequence[Node], k: int) -> Node:
    """k-th component of A^{-1} b for an n x n matrix given row-major."""
    n = len(b)
    if len(A) != n * n:
        raise ValueError("matrix/vector size mismatch")
    return _mk(SOLVE, tuple(A) + tuple(b), (n, k))


# ---------------------------------------------------------------- derivatives

def d(node: Node, k: int) -> Node:
    """Exact partial derivative with respect to variable index k."""
    cache = node._deriv
    got = cache.get(k)
    if got is not None:
        return got
    # iterative post-order so deep DAGs do not hit the recursion limit
    stack = [node]
    while stack:
        n = stack[-1]
        if k in n._deriv:
            stack.pop()
            continue
        pending = [a for a in n.args if k not in a._deriv]
        if pending:
            stack.extend(pending)
            continue
        n._deriv[k] = _d1(n, k)
        stack.pop()
    return cache[k]


def _d1(n: Node, k: int) -> Node:
    op = n.op
    if op == CONST:
        return ZERO
    if op == VAR:
        return ONE if n.value == k else ZERO
    a = n.args[0]
    da = a._deriv[k] if n.args else None
    if op == ADD:
        return add(da, n.args[1]._deriv[k])
    if op == NEG:
        return neg(da)
    if op == MUL:
        b = n.args[1]
        return add(mul(da, b), mul(a, b._deriv[k]))
    if op == DIV:
        b = n.args[1]
        db = b._deriv[k]
        if _is(db, 0.0):
            return div(da, b)
        return div(sub(da, mul(n, db)), b)
    if op == POW:
        b = n.args[1]
        db = b._deriv[k]
        if b.op == CONST:
            return mul(mul(b, power(a, const(b.value - 1.0))), da)
        return mul(n, add(mul(db, fn("ln", a)), div(mul(b, da), a)))
    if op == FN:
        name = n.value
        if name == "sqrt":
            return div(da, mul(const(2.0), n))
        if name == "exp":
            return mul(n, da)
        if name == "ln":
            return div(da, a)
        if name == "sin":
            return mul(fn("cos", a), da)
        if name == "cos":
            return neg(mul(fn("sin", a), da))
        if name == "abs":
            return mul(div(a, n), da)
        if name == "expint":
            return neg(mul(div(fn("exp", neg(a)), a), da))
    if op == SOLVE:
        size, idx = n.value
        A = n.args[: size * size]
        b = n.args[size * size:]
        y = [solve_node(A, b, j) for j in range(size)]
        rhs = []
        for i in range(size):
            acc = b[i]._deriv[k]
            for j in range(size):
                acc = sub(acc, mul(A[i * size + j]._deriv[k], y[j]))
            rhs.append(acc)
        return solve_node(A, rhs, idx)
    raise AssertionError(f"unhandled op {op}")


# ---------------------------------------------------------------- printing

def _num(v: float) -> str:
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def to_text(n: Node, names: Sequence[str] | None = None) -> str:
    """Render in the input grammar; the result parses back to the same DAG."""
    memo: dict = {}

    def name_of(k):
        return names[k] if names is not None else f"x{k}"

    def go(n: Node) -> tuple[str, int]:
        # returns (text, level): 1 sum, 2 product, 3 unary, 4 power, 5 atom
        key = id(n)
        if key in memo:
            return memo[key]
        op = n.op
        if op == CONST:
            out = (_num(n.value), 5 if n.value >= 0 else 3)
        elif op == VAR:
            out = (name_of(n.value), 5)
        elif op == ADD:
            a, b = n.args
            if b.op == NEG:
                out = (f"{at(a, 1)} - {at(b.args[0], 2)}", 1)
            elif b.op == CONST and b.value < 0:
                out = (f"{at(a, 1)} - {_num(-b.value)}", 1)
            else:
                out = (f"{at(a, 1)} + {at(b, 2)}", 1)
        elif op == NEG:
            a = n.args[0]
            t, lv = go(a)
            if lv == 5 or (lv == 3 and a.op == NEG):
                out = (f"-{t}", 3)
            else:
                out = (f"-({t})", 3)
        elif op in (MUL, DIV):
            a, b = n.args
            sym = "*" if op == MUL else "/"
            out = (f"{at(a, 2)}{sym}{at(b, 3)}", 2)
        elif op == POW:
            a, b = n.args
            ta, la = go(a)
            base = ta if la == 5 else f"({ta})"
            tb, lb = go(b)
            expo = tb if lb >= 4 or lb == 3 else f"({tb})"
            out = (f"{base}^{expo}", 4)
        elif op == FN:
            out = (f"{n.value}({go(n.args[0])[0]})", 5)
        else:
            out = ("<solve>", 5)
        memo[key] = out
        return out

    def at(n: Node, level: int) -> str:
        t, lv = go(n)
        return t if lv >= level else f"({t})"

    return go(n)[0]


# ---------------------------------------------------------------- evaluation

EULER_GAMMA = 0.57721566490153286061


def _e1(x: float) -> float:
    """Exponential integral E1(x) = int_1^inf exp(-x t)/t dt for x > 0."""
    if not x > 0.0:
        return math.nan
    if x < 1.0:
        total = 0.0
        term = 1.0
        k = 1
        while True:
            term *= -x / k
            inc = -term / k
            total += inc
            if abs(inc) < 1e-17 * max(1.0, abs(total)):
                break
            k += 1
        return -EULER_GAMMA - math.log(x) + total
    # modified Lentz for the continued fraction
    tiny = 1e-300
    b = x + 1.0
    c = 1.0 / tiny
    dd = 1.0 / b
    h = dd
    i = 1
    while i < 10000:
        an = -float(i * i)
        b += 2.0
        dd = 1.0 / (an * dd + b)
        c = b + an / c
        delta = c * dd
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
        i += 1
    return h * math.exp(-x)


_e1_vec = np.frompyfunc(_e1, 1, 1)


def _expint(x):
    arr = np.asarray(x, dtype=float)
    return np.asarray(_e1_vec(arr), dtype=float)


def _div(a, b):
    b = np.asarray(b, dtype=float)
    return np.where(b == 0.0, np.nan, a / np.where(b == 0.0, 1.0, b))


def _pow(a, b):
    a = np.asarray(a, dtype=float)
    out = np.power(a, b)
    return np.where(np.isfinite(out), out, np.nan)


def _sqrt(a):
    a = np.asarray(a, dtype=float)
    return np.where(a < 0, np.nan, np.sqrt(np.abs(a)))


def _ln(a):
    a = np.asarray(a, dtype=float)
    return np.where(a > 0, np.log(np.where(a > 0, a, 1.0)), np.nan)


def _solve(size, k, *vals):
    A_vals = vals[: size * size]
    b_vals = vals[size * size:]
    shape = np.broadcast(*vals).shape
    A = np.stack([np.broadcast_to(np.asarray(v, float), shape) for v in A_vals], -1)
    A = A.reshape(shape + (size, size))
    b = np.stack([np.broadcast_to(np.asarray(v, float), shape) for v in b_vals], -1)
    out = np.full(shape, np.nan)
    flat_A = A.reshape(-1, size, size)
    flat_b = b.reshape(-1, size)
    res = out.reshape(-1)
    for i in range(flat_A.shape[0]):
        try:
            res[i] = np.linalg.solve(flat_A[i], flat_b[i])[k]
        except np.linalg.LinAlgError:
            res[i] = np.nan
    return res.reshape(shape) if shape else res[0]


_ENV = {
    "_div": _div,
    "_pow": _pow,
    "_sqrt": _sqrt,
    "_ln": _ln,
    "_exp": np.exp,
    "_sin": np.sin,
    "_cos": np.cos,
    "_abs": np.abs,
    "_expint": _expint,
    "_solve": _solve,
}

_FN_CALL = {"sqrt": "_sqrt", "exp": "_exp", "ln": "_ln", "sin": "_sin",
            "cos": "_cos", "abs": "_abs", "expint": "_expint"}


def topo_order(roots: Sequence[Node]) -> list[Node]:
    seen: set = set()
    order: list[Node] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            n, done = stack.pop()
            if done:
                order.append(n)
                continue
            if id(n) in seen:
                continue
            seen.add(id(n))
            stack.append((n, True))
            for a in n.args:
                if id(a) not in seen:
                    stack.append((a, False))
    return order


_compiled: dict = {}


def compile_nodes(roots: Sequence[Node]) -> Callable:
    """Straight-line numpy code for the given roots.

    The returned function takes a sequence of coordinate arrays and returns
    a tuple of results (scalars or arrays, not broadcast).
    """
    key = tuple(id(r) for r in roots)
    got = _compiled.get(key)
    if got is not None:
        return got
    order = topo_order(roots)
    slot = {}
    lines = ["def _f(X):"]
    for i, n in enumerate(order):
        slot[id(n)] = f"t{i}"
        op = n.op
        if op == CONST:
            rhs = repr(n.value)
        elif op == VAR:
            rhs = f"X[{n.value}]"
        else:
            args = [slot[id(a)] for a in n.args]
            if op == ADD:
                rhs = f"{args[0]} + {args[1]}"
            elif op == MUL:
                rhs = f"{args[0]} * {args[1]}"
            elif op == NEG:
                rhs = f"-{args[0]}"
            elif op == DIV:
                rhs = f"_div({args[0]}, {args[1]})"
            elif op == POW:
                rhs = f"_pow({args[0]}, {args[1]})"
            elif op == FN:
                rhs = f"{_FN_CALL[n.value]}({args[0]})"
            else:
                size, k = n.value
                rhs = f"_solve({size}, {k}, {', '.join(args)})"
        lines.append(f"    t{i} = {rhs}")
    lines.append("    return (" + "".join(slot[id(r)] + ", " for r in roots) + ")")
    namespace = dict(_ENV)
    exec(compile("\n".join(lines), "<exprlang>", "exec"), namespace)
    func = namespace["_f"]
    _compiled[key] = func
    return func


def eval_nodes(roots: Sequence[Node], points: np.ndarray) -> np.ndarray:
    """Evaluate roots at points of shape (N, dim); returns (N, len(roots))."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cols = [pts[:, k] for k in range(pts.shape[1])]
    func = compile_nodes(roots)
    with np.errstate(all="ignore"):
        vals = func(cols)
    out = np.empty((pts.shape[0], len(roots)))
    for j, v in enumerate(vals):
        out[:, j] = v
    out[~np.isfinite(out)] = np.nan
    return out


# ---------------------------------------------------------------- parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    toks = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos,
                                  "number, identifier, operator or parenthesis")
        kind = m.lastgroup
        start = m.start(kind)
        toks.append((kind, m.group(kind), start))
        pos = m.end()
    toks.append(("end", "", n))
    return toks


class _Parser:
    def __init__(self, text: str, coords: Coords):
        self.toks = _tokenize(text)
        self.i = 0
        self.coords = coords

    def peek(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, val, pos = self.take()
        if val != value or kind != "op":
            raise ExprSyntaxError(f"found {val or 'end of input'!r}", pos, repr(value))

    def expr(self) -> Node:
        left = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            right = self.term()
            left = add(left, right) if op == "+" else sub(left, right)
        return left

    def term(self) -> Node:
        left = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            right = self.factor()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def factor(self) -> Node:
        base = self.unary()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return power(base, self.factor())
        return base

    def unary(self) -> Node:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.unary())
        return self.primary()

    def primary(self) -> Node:
        kind, val, pos = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "id":
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return fn(val, arg)
            if val in self.coords.names:
                return var(self.coords.names.index(val))
            raise UnknownIdentifier(val, pos)
        if kind == "op" and val == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        raise ExprSyntaxError(f"found {val or 'end of input'!r}", pos,
                              "number, identifier, function or '('")


# ---------------------------------------------------------------- ScalarField

class ScalarField:
    """Immutable scalar expression over declared coordinates."""

    __slots__ = ("node", "coords")

    def __init__(self, node: Node, coords: Coords):
        object.__setattr__(self, "node", node)
        object.__setattr__(self, "coords", coords)

    def __setattr__(self, key, value):
        raise AttributeError("ScalarField is immutable")

    # constructors
    @staticmethod
    def constant(value: float, coords: Coords) -> "ScalarField":
        return ScalarField(const(value), coords)

    @staticmethod
    def coordinate(name_or_index, coords: Coords) -> "ScalarField":
        return ScalarField(var(coords.index(name_or_index)), coords)

    def _lift(self, other) -> Node:
        if isinstance(other, ScalarField):
            if other.coords != self.coords:
                raise ValueError("fields live on different coordinates")
            return other.node
        if isinstance(other, (int, float, np.integer, np.floating)):
            return const(float(other))
        return NotImplemented

    def _wrap(self, node: Node) -> "ScalarField":
        return ScalarField(node, self.coords)

    def __add__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(add(self.node, n))

    def __radd__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(add(n, self.node))

    def __sub__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(sub(self.node, n))

    def __rsub__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(sub(n, self.node))

    def __mul__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(mul(self.node, n))

    def __rmul__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(mul(n, self.node))

    def __truediv__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(div(self.node, n))

    def __rtruediv__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(div(n, self.node))

    def __pow__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(power(self.node, n))

    def __rpow__(self, o):
        n = self._lift(o)
        return NotImplemented if n is NotImplemented else self._wrap(power(n, self.node))

    def __neg__(self):
        return self._wrap(neg(self.node))

    def apply(self, name: str) -> "ScalarField":
        return self._wrap(fn(name, self.node))

    def derive(self, k) -> "ScalarField":
        return self._wrap(d(self.node, self.coords.index(k)))

    def is_zero(self) -> bool:
        return _is(self.node, 0.0)

    def is_constant(self) -> bool:
        return self.node.op == CONST

    def eval(self, point) -> float:
        p = np.asarray(point, dtype=float).reshape(-1)
        if p.shape[0] != self.coords.dim:
            raise ValueError(f"point has {p.shape[0]} entries, expected {self.coords.dim}")
        if not np.all(np.isfinite(p)):
            raise ValueError("point entries must be finite")
        v = eval_nodes([self.node], p[None, :])[0, 0]
        if not np.isfinite(v):
            raise DomainError(f"{self} is undefined at {tuple(p.tolist())}")
        return float(v)

    def eval_many(self, points) -> np.ndarray:
        """Values at points (N, dim); NaN marks points outside the domain."""
        return eval_nodes([self.node], points)[:, 0]

    def rebase(self, coords: Coords) -> "ScalarField":
        """Same expression on a coordinate list that extends this one."""
        if coords.names[: self.coords.dim] != self.coords.names:
            raise ValueError("new coordinates must extend the old ones")
        return ScalarField(self.node, coords)

    def __str__(self):
        return to_text(self.node, self.coords.names)

    def __repr__(self):
        return f"ScalarField({self})"


def eval_fields(fields: Sequence[ScalarField], points) -> np.ndarray:
    """Evaluate several fields at once; shape (N, len(fields)), NaN off-domain."""
    if not fields:
        return np.zeros((np.atleast_2d(points).shape[0], 0))
    return eval_nodes([f.node for f in fields], points)


# ---------------------------------------------------------------- module API

def parse(text: str, coords: Coords) -> ScalarField:
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0, "an expression")
    p = _Parser(text, coords)
    node = p.expr()
    kind, val, pos = p.peek()
    if kind != "end":
        raise ExprSyntaxError(f"found {val!r}", pos, "operator or end of input")
    return ScalarField(node, coords)


def derive(f: ScalarField, k) -> ScalarField:
    return f.derive(k)


def evaluate(f: ScalarField, point) -> float:
    return f.eval(point)


def expint(x: float) -> float:
    """E1(x) for scalar x > 0."""
    v = _e1(float(x))
    if not math.isfinite(v):
        raise DomainError(f"expint({x}) is outside the domain")
    return v
