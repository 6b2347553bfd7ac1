"""Symbolic expressions over state variables ``x0..x{n-1}`` and inputs ``u0..u{m-1}``.

Nodes are immutable. Smart constructors (``add``, ``mul``, ...) perform the only
simplification we ever do, constant folding, so every tree built through them
is already folded. Evaluation walks a flattened post-order "tape" keyed on node
identity, so shared sub-trees (which the network translator and ``diff``
produce in abundance) are evaluated once per call.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import interval as iv
from .interval import EnclosureError, Interval

FUNCTION_NAMES = ("sin", "cos", "exp", "tanh", "sigmoid", "softplus")


class ParseError(ValueError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class EvaluationError(ArithmeticError):
    pass


class Expr:
    """Base class; supports ``+ - * / ** unary-`` with folding."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _lift(other))

    def __radd__(self, other):
        return add(_lift(other), self)

    def __sub__(self, other):
        return sub(self, _lift(other))

    def __rsub__(self, other):
        return sub(_lift(other), self)

    def __mul__(self, other):
        return mul(self, _lift(other))

    def __rmul__(self, other):
        return mul(_lift(other), self)

    def __truediv__(self, other):
        return div(self, _lift(other))

    def __rtruediv__(self, other):
        return div(_lift(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, n):
        return power(self, n)

    def __str__(self):
        return pretty(self)

    def children(self) -> tuple:
        return ()


@dataclass(frozen=True, eq=True, repr=True)
class Const(Expr):
    value: float


@dataclass(frozen=True, eq=True)
class Var(Expr):
    index: int


@dataclass(frozen=True, eq=True)
class Input(Expr):
    index: int


@dataclass(frozen=True, eq=True)
class Neg(Expr):
    arg: Expr

    def children(self):
        return (self.arg,)


@dataclass(frozen=True, eq=True)
class _Binary(Expr):
    left: Expr
    right: Expr

    def children(self):
        return (self.left, self.right)


class Add(_Binary):
    pass


class Sub(_Binary):
    pass


class Mul(_Binary):
    pass


class Div(_Binary):
    pass


@dataclass(frozen=True, eq=True)
class Pow(Expr):
    base: Expr
    exp: int

    def __post_init__(self):
        if not isinstance(self.exp, int) or self.exp < 0:
            raise ValueError(f"Pow exponent must be a non-negative integer, got {self.exp!r}")

    def children(self):
        return (self.base,)


@dataclass(frozen=True, eq=True)
class Func(Expr):
    name: str
    arg: Expr

    def __post_init__(self):
        if self.name not in FUNCTION_NAMES:
            raise ValueError(f"unknown function {self.name!r}")

    def children(self):
        return (self.arg,)


ZERO = Const(0.0)
ONE = Const(1.0)


def _lift(v) -> Expr:
    if isinstance(v, Expr):
        return v
    if isinstance(v, (int, float, np.floating, np.integer)):
        return Const(float(v))
    raise TypeError(f"cannot convert {type(v).__name__} to Expr")


def _is(e: Expr, c: float) -> bool:
    return isinstance(e, Const) and e.value == c


# --------------------------------------------------------------------------
# smart constructors (constant folding only)


def const(c: float) -> Const:
    return Const(float(c))


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value + b.value)
    if _is(a, 0.0):
        return b
    if _is(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value - b.value)
    if _is(b, 0.0):
        return a
    if _is(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value * b.value)
    if _is(a, 0.0) or _is(b, 0.0):
        return ZERO
    if _is(a, 1.0):
        return b
    if _is(b, 1.0):
        return a
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    if _is(b, 0.0):
        raise EvaluationError("division by constant zero")
    if isinstance(a, Const) and isinstance(b, Const):
        return Const(a.value / b.value)
    if _is(a, 0.0):
        return ZERO
    if _is(b, 1.0):
        return a
    return Div(a, b)


def power(a: Expr, n) -> Expr:
    if isinstance(n, float) and n.is_integer():
        n = int(n)
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValueError(f"Pow exponent must be a non-negative integer, got {n!r}")
    n = int(n)
    if n == 0:
        return ONE
    if n == 1:
        return a
    if isinstance(a, Const):
        return Const(a.value**n)
    return Pow(a, n)


def func(name: str, a: Expr) -> Expr:
    if isinstance(a, Const):
        return Const(_SCALAR_FUNCS[name](a.value))
    return Func(name, a)


def sin(a):
    return func("sin", _lift(a))


def cos(a):
    return func("cos", _lift(a))


def exp(a):
    return func("exp", _lift(a))


def tanh(a):
    return func("tanh", _lift(a))


def sigmoid(a):
    return func("sigmoid", _lift(a))


def softplus(a):
    return func("softplus", _lift(a))


def x(i: int) -> Var:
    return Var(i)


def u(i: int) -> Input:
    return Input(i)


def _sigmoid_scalar(v: float) -> float:
    if v >= 0:
        return 1.0 / (1.0 + math.exp(-v))
    z = math.exp(v)
    return z / (1.0 + z)


def _softplus_scalar(v: float) -> float:
    return max(v, 0.0) + math.log1p(math.exp(-abs(v)))


_SCALAR_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "exp": math.exp,
    "tanh": math.tanh,
    "sigmoid": _sigmoid_scalar,
    "softplus": _softplus_scalar,
}


# --------------------------------------------------------------------------
# traversal


def postorder(roots: Sequence[Expr]) -> list[Expr]:
    """Unique nodes (by identity) of ``roots`` in dependency order."""
    seen: set[int] = set()
    order: list[Expr] = []
    stack: list[tuple[Expr, bool]] = [(r, False) for r in reversed(roots)]
    while stack:
        node, expanded = stack.pop()
        if id(node) in seen:
            continue
        if expanded:
            seen.add(id(node))
            order.append(node)
            continue
        stack.append((node, True))
        for c in reversed(node.children()):
            if id(c) not in seen:
                stack.append((c, False))
    return order


def max_var_index(e: Expr) -> int:
    """Largest state-variable index used in ``e`` (-1 if none)."""
    return max((n.index for n in postorder([e]) if isinstance(n, Var)), default=-1)


def max_input_index(e: Expr) -> int:
    return max((n.index for n in postorder([e]) if isinstance(n, Input)), default=-1)


def node_count(roots: Sequence[Expr]) -> int:
    return len(postorder(roots))


def _rebuild(roots: Sequence[Expr], leaf: Callable[[Expr], Expr | None]) -> list[Expr]:
    """Rebuild ``roots`` bottom-up, replacing leaves via ``leaf`` and refolding."""
    memo: dict[int, Expr] = {}
    for n in postorder(roots):
        rep = leaf(n)
        if rep is None:
            if isinstance(n, Neg):
                rep = neg(memo[id(n.arg)])
            elif isinstance(n, Add):
                rep = add(memo[id(n.left)], memo[id(n.right)])
            elif isinstance(n, Sub):
                rep = sub(memo[id(n.left)], memo[id(n.right)])
            elif isinstance(n, Mul):
                rep = mul(memo[id(n.left)], memo[id(n.right)])
            elif isinstance(n, Div):
                rep = div(memo[id(n.left)], memo[id(n.right)])
            elif isinstance(n, Pow):
                rep = power(memo[id(n.base)], n.exp)
            elif isinstance(n, Func):
                rep = func(n.name, memo[id(n.arg)])
            else:
                rep = n
        memo[id(n)] = rep
    return [memo[id(r)] for r in roots]


def share(roots: Sequence[Expr]) -> list[Expr]:
    """Merge structurally equal sub-trees so each is stored (and evaluated) once.

    Printed expressions lose the sharing a network translation has; this
    restores it after parsing.
    """
    memo: dict[int, Expr] = {}
    table: dict[tuple, Expr] = {}
    for n in postorder(roots):
        if isinstance(n, Const):
            key = ("c", float(n.value))
        elif isinstance(n, (Var, Input)):
            key = (type(n), n.index)
        elif isinstance(n, Pow):
            key = (Pow, id(memo[id(n.base)]), n.exp)
        elif isinstance(n, Func):
            key = (Func, n.name, id(memo[id(n.arg)]))
        else:
            key = (type(n),) + tuple(id(memo[id(c)]) for c in n.children())
        hit = table.get(key)
        if hit is None:
            if isinstance(n, Neg):
                hit = Neg(memo[id(n.arg)])
            elif isinstance(n, _Binary):
                hit = type(n)(memo[id(n.left)], memo[id(n.right)])
            elif isinstance(n, Pow):
                hit = Pow(memo[id(n.base)], n.exp)
            elif isinstance(n, Func):
                hit = Func(n.name, memo[id(n.arg)])
            else:
                hit = n
            table[key] = hit
        memo[id(n)] = hit
    return [memo[id(r)] for r in roots]


def substitute(e: Expr, inputs: Sequence[Expr]) -> Expr:
    """Replace every ``Input(j)`` by ``inputs[j]``."""

    def leaf(n):
        if isinstance(n, Input):
            if n.index >= len(inputs):
                raise ValueError(f"input u{n.index} has no substitute")
            return inputs[n.index]
        return None

    return _rebuild([e], leaf)[0]


def round_coefficients(e: Expr, precision: float = 1e-3) -> Expr:
    """Snap every constant to the nearest multiple of ``precision`` and refold."""
    return round_many([e], precision)[0]


def round_many(exprs: Sequence[Expr], precision: float = 1e-3) -> list[Expr]:
    """``round_coefficients`` over several roots, keeping shared nodes shared."""
    if precision <= 0:
        raise ValueError("precision must be positive")
    digits = -math.floor(math.log10(precision)) if precision < 1 else 0
    exact_decimal = math.isclose(precision, 10.0**-digits, rel_tol=1e-12)

    def snap(v: float) -> float:
        k = round(v / precision)
        r = k * precision
        if exact_decimal:
            r = round(r, digits)
        return r + 0.0  # normalise -0.0

    def leaf(n):
        if isinstance(n, Const):
            return Const(snap(n.value))
        return None

    # fold first so constant sub-trees are rounded as a whole; snapping can
    # expose new foldable nodes, so repeat until nothing changes
    out = _rebuild(list(exprs), lambda n: None)
    for _ in range(5):
        nxt = _rebuild(out, leaf)
        if nxt == out:
            break
        out = nxt
    return out


# --------------------------------------------------------------------------
# evaluation


def eval_expr(e: Expr, point: Sequence[float], inputs: Sequence[float] = ()) -> float:
    """Evaluate at a single point with IEEE double semantics."""
    vals: dict[int, float] = {}
    for n in postorder([e]):
        if isinstance(n, Const):
            v = n.value
        elif isinstance(n, Var):
            v = float(point[n.index])
        elif isinstance(n, Input):
            v = float(inputs[n.index])
        elif isinstance(n, Neg):
            v = -vals[id(n.arg)]
        elif isinstance(n, Add):
            v = vals[id(n.left)] + vals[id(n.right)]
        elif isinstance(n, Sub):
            v = vals[id(n.left)] - vals[id(n.right)]
        elif isinstance(n, Mul):
            v = vals[id(n.left)] * vals[id(n.right)]
        elif isinstance(n, Div):
            d = vals[id(n.right)]
            if d == 0.0:
                raise EvaluationError("division by zero")
            v = vals[id(n.left)] / d
        elif isinstance(n, Pow):
            v = vals[id(n.base)] ** n.exp
        elif isinstance(n, Func):
            try:
                v = _SCALAR_FUNCS[n.name](vals[id(n.arg)])
            except OverflowError as exc:
                raise EvaluationError(f"overflow in {n.name}") from exc
        else:  # pragma: no cover
            raise TypeError(type(n))
        vals[id(n)] = v
    return vals[id(e)]


def _np_funcs():
    return {
        "sin": np.sin,
        "cos": np.cos,
        "exp": np.exp,
        "tanh": np.tanh,
        "sigmoid": iv.sigmoid_np,
        "softplus": iv.softplus_np,
    }


def _torch_funcs():
    import torch

    return {
        "sin": torch.sin,
        "cos": torch.cos,
        "exp": torch.exp,
        "tanh": torch.tanh,
        "sigmoid": torch.sigmoid,
        "softplus": lambda t: torch.clamp(t, min=0.0) + torch.log1p(torch.exp(-torch.abs(t))),
    }


def evaluate(exprs: Sequence[Expr], X, U=None, backend: str = "numpy") -> list:
    """Evaluate several expressions on a batch of points.

    ``X`` has shape ``(N, n)`` (numpy array or torch tensor, matching
    ``backend``); ``U`` likewise ``(N, m)``. Returns one length-``N`` array
    per expression. Shared sub-expressions are computed once.
    """
    if backend == "numpy":
        fns = _np_funcs()
        X = np.asarray(X, dtype=float)
        N = X.shape[0]
        full = lambda v: np.full(N, v)  # noqa: E731
    elif backend == "torch":
        import torch

        fns = _torch_funcs()
        N = X.shape[0]
        full = lambda v: torch.full((N,), v, dtype=X.dtype)  # noqa: E731
    else:
        raise ValueError(f"unknown backend {backend!r}")
    vals: dict[int, object] = {}
    for n in postorder(exprs):
        if isinstance(n, Const):
            v = n.value
        elif isinstance(n, Var):
            v = X[:, n.index]
        elif isinstance(n, Input):
            v = U[:, n.index]
        elif isinstance(n, Neg):
            v = -vals[id(n.arg)]
        elif isinstance(n, Add):
            v = vals[id(n.left)] + vals[id(n.right)]
        elif isinstance(n, Sub):
            v = vals[id(n.left)] - vals[id(n.right)]
        elif isinstance(n, Mul):
            v = vals[id(n.left)] * vals[id(n.right)]
        elif isinstance(n, Div):
            v = vals[id(n.left)] / vals[id(n.right)]
        elif isinstance(n, Pow):
            v = vals[id(n.base)] ** n.exp
        elif isinstance(n, Func):
            a = vals[id(n.arg)]
            v = fns[n.name](full(float(a)) if isinstance(a, float) else a)
        else:  # pragma: no cover
            raise TypeError(type(n))
        vals[id(n)] = v
    out = []
    for e in exprs:
        v = vals[id(e)]
        out.append(full(float(v)) if isinstance(v, float) else v)
    return out


def compile_numpy(exprs: Sequence[Expr]):
    """Straight-line numpy function ``g(X, U=None) -> (N, k)`` for repeated evaluation.

    Same values as :func:`evaluate`; used where the same expressions are
    evaluated many thousands of times (trajectory integration).
    """
    exprs = list(exprs)
    lines, names = [], {}
    ops = {Add: "+", Sub: "-", Mul: "*", Div: "/"}
    for k, n in enumerate(postorder(exprs)):
        t = f"t{k}"
        if isinstance(n, Const):
            rhs = repr(float(n.value))
        elif isinstance(n, Var):
            rhs = f"X[:, {n.index}]"
        elif isinstance(n, Input):
            rhs = f"U[:, {n.index}]"
        elif isinstance(n, Neg):
            rhs = f"-{names[id(n.arg)]}"
        elif type(n) in ops:
            rhs = f"{names[id(n.left)]} {ops[type(n)]} {names[id(n.right)]}"
        elif isinstance(n, Pow):
            rhs = f"{names[id(n.base)]} ** {n.exp}"
        elif isinstance(n, Func):
            rhs = f"F_{n.name}({names[id(n.arg)]})"
        else:  # pragma: no cover
            raise TypeError(type(n))
        names[id(n)] = t
        lines.append(f"    {t} = {rhs}")
    cols = ", ".join(f"np.broadcast_to({names[id(e)]}, (X.shape[0],))" for e in exprs)
    src = "def _g(X, U=None):\n" + "\n".join(lines) + f"\n    return np.stack([{cols}], axis=1)\n"
    env = {"np": np, **{f"F_{k}": v for k, v in _np_funcs().items()}}
    exec(compile(src, "<compiled-expr>", "exec"), env)
    return env["_g"]


def evaluate_intervals(exprs: Sequence[Expr], lo: np.ndarray, hi: np.ndarray) -> list[tuple]:
    """Interval-evaluate expressions over a batch of boxes ``[lo, hi]`` of shape ``(N, n)``.

    Returns one ``(lo, hi)`` pair of length-``N`` arrays per expression; NaN
    bounds mark failed enclosures.
    """
    N = lo.shape[0]
    vals: dict[int, tuple] = {}
    for n in postorder(exprs):
        if isinstance(n, Const):
            v = iv.const(n.value, N)
        elif isinstance(n, Var):
            v = (lo[:, n.index], hi[:, n.index])
        elif isinstance(n, Input):
            raise ValueError("cannot interval-evaluate an expression with free inputs")
        elif isinstance(n, Neg):
            v = iv.neg(vals[id(n.arg)])
        elif isinstance(n, Add):
            v = iv.add(vals[id(n.left)], vals[id(n.right)])
        elif isinstance(n, Sub):
            v = iv.sub(vals[id(n.left)], vals[id(n.right)])
        elif isinstance(n, Mul):
            v = iv.mul(vals[id(n.left)], vals[id(n.right)])
        elif isinstance(n, Div):
            v = iv.div(vals[id(n.left)], vals[id(n.right)])
        elif isinstance(n, Pow):
            v = iv.power(vals[id(n.base)], n.exp)
        elif isinstance(n, Func):
            v = iv.FUNCTIONS[n.name](vals[id(n.arg)])
        else:  # pragma: no cover
            raise TypeError(type(n))
        vals[id(n)] = v
    return [vals[id(e)] for e in exprs]


def interval_eval(e: Expr, box: Sequence[Interval]) -> Interval:
    """Sound enclosure of ``e`` over ``box``; raises ``EnclosureError`` on failure."""
    if max_var_index(e) >= len(box):
        raise ValueError("box does not cover every variable")
    lo = np.array([[b.lo for b in box]], dtype=float)
    hi = np.array([[b.hi for b in box]], dtype=float)
    (rlo, rhi), = evaluate_intervals([e], lo, hi)
    a, b = float(rlo[0]), float(rhi[0])
    if not (math.isfinite(a) and math.isfinite(b)):
        raise EnclosureError("enclosure failed (division by an interval containing zero or overflow)")
    return Interval(a, b)


# --------------------------------------------------------------------------
# calculus


def diff(e: Expr, var: int, _memo: dict | None = None) -> Expr:
    """Symbolic partial derivative with respect to ``x{var}``."""
    memo: dict[int, Expr] = {} if _memo is None else _memo
    for n in postorder([e]):
        if id(n) in memo:
            continue
        if isinstance(n, Const) or isinstance(n, Input):
            d = ZERO
        elif isinstance(n, Var):
            d = ONE if n.index == var else ZERO
        elif isinstance(n, Neg):
            d = neg(memo[id(n.arg)])
        elif isinstance(n, Add):
            d = add(memo[id(n.left)], memo[id(n.right)])
        elif isinstance(n, Sub):
            d = sub(memo[id(n.left)], memo[id(n.right)])
        elif isinstance(n, Mul):
            d = add(mul(memo[id(n.left)], n.right), mul(n.left, memo[id(n.right)]))
        elif isinstance(n, Div):
            da, db = memo[id(n.left)], memo[id(n.right)]
            if _is(db, 0.0):
                d = div(da, n.right)
            else:
                d = div(sub(mul(da, n.right), mul(n.left, db)), power(n.right, 2))
        elif isinstance(n, Pow):
            db = memo[id(n.base)]
            d = ZERO if n.exp == 0 else mul(mul(const(n.exp), power(n.base, n.exp - 1)), db)
        elif isinstance(n, Func):
            da = memo[id(n.arg)]
            if _is(da, 0.0):
                d = ZERO
            elif n.name == "sin":
                d = mul(func("cos", n.arg), da)
            elif n.name == "cos":
                d = mul(neg(func("sin", n.arg)), da)
            elif n.name == "exp":
                d = mul(n, da)
            elif n.name == "tanh":
                d = mul(sub(ONE, power(n, 2)), da)
            elif n.name == "sigmoid":
                d = mul(mul(n, sub(ONE, n)), da)
            elif n.name == "softplus":
                d = mul(func("sigmoid", n.arg), da)
            else:  # pragma: no cover
                raise ValueError(n.name)
        else:  # pragma: no cover
            raise TypeError(type(n))
        memo[id(n)] = d
    return memo[id(e)]


def gradient(e: Expr, dim: int) -> list[Expr]:
    return [diff(e, i) for i in range(dim)]


@dataclass(frozen=True)
class VectorField:
    dim_state: int
    dim_input: int
    components: tuple

    def __post_init__(self):
        if self.dim_state < 1:
            raise ValueError("dim_state must be positive")
        if len(self.components) != self.dim_state:
            raise ValueError(
                f"expected {self.dim_state} components, got {len(self.components)}"
            )
        for c in self.components:
            if max_var_index(c) >= self.dim_state:
                raise ValueError(f"component {pretty(c)!r} uses a state index out of range")
            if max_input_index(c) >= self.dim_input:
                raise ValueError(f"component {pretty(c)!r} uses an input index out of range")

    @classmethod
    def parse(cls, texts: Sequence[str], dim_input: int = 0) -> VectorField:
        n = len(texts)
        return cls(n, dim_input, tuple(parse(t, n, dim_input) for t in texts))

    def __call__(self, X: np.ndarray, U: np.ndarray | None = None) -> np.ndarray:
        """Batch evaluation: ``X`` of shape ``(N, n)`` -> ``(N, n)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cols = evaluate(self.components, X, U)
        return np.stack(cols, axis=1)

    def __str__(self):
        return "[" + ", ".join(pretty(c) for c in self.components) + "]"


def lie_derivative(c: Expr, f: VectorField) -> Expr:
    """``sum_i dc/dx_i * f_i`` for an input-free vector field."""
    if f.dim_input != 0:
        raise ValueError("close the loop before taking a Lie derivative")
    if max_var_index(c) >= f.dim_state:
        raise ValueError("certificate uses more state variables than the vector field has")
    total: Expr = ZERO
    for i, fi in enumerate(f.components):
        total = add(total, mul(diff(c, i), fi))
    return total


# --------------------------------------------------------------------------
# parsing and printing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>\*\*|[-+*/^(),]))"
)


def _tokenize(text: str):
    pos = 0
    toks = []
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        start = m.start(m.lastgroup)
        toks.append((m.lastgroup, m.group(m.lastgroup), start))
        pos = m.end()
    toks.append(("eof", "", len(text)))
    return toks


class _Parser:
    def __init__(self, text, n, m, constants):
        self.toks = _tokenize(text)
        self.i = 0
        self.n = n
        self.m = m
        self.constants = constants or {}

    def peek(self):
        return self.toks[self.i]

    def take(self):
        t = self.toks[self.i]
        self.i += 1
        return t

    def expect(self, value):
        t = self.take()
        if t[1] != value:
            what = "end of input" if t[0] == "eof" else repr(t[1])
            raise ParseError(f"expected {value!r}, found {what}", t[2])
        return t

    def parse(self):
        e = self.sum()
        t = self.peek()
        if t[0] != "eof":
            raise ParseError(f"unexpected token {t[1]!r}", t[2])
        return e

    def sum(self):
        e = self.product()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            r = self.product()
            e = add(e, r) if op == "+" else sub(e, r)
        return e

    def product(self):
        e = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()
            r = self.unary()
            if op[1] == "*":
                e = mul(e, r)
            else:
                if _is(r, 0.0):
                    raise ParseError("division by constant zero", op[2])
                e = div(e, r)
        return e

    def unary(self):
        if self.peek()[1] == "-":
            self.take()
            return neg(self.unary())
        if self.peek()[1] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[1] in ("^", "**"):
            self.take()
            t = self.take()
            paren = False
            if t[1] == "(":
                paren = True
                t = self.take()
            if t[0] != "num":
                raise ParseError("exponent must be a non-negative integer literal", t[2])
            val = float(t[1])
            if not val.is_integer():
                raise ParseError("exponent must be a non-negative integer literal", t[2])
            if paren:
                self.expect(")")
            return power(base, int(val))
        return base

    def atom(self):
        t = self.take()
        kind, text, pos = t
        if kind == "num":
            return Const(float(text))
        if kind == "id":
            if text in FUNCTION_NAMES:
                self.expect("(")
                a = self.sum()
                self.expect(")")
                return func(text, a)
            if text in self.constants:
                return Const(float(self.constants[text]))
            m = re.fullmatch(r"([xu])(\d+)", text)
            if m:
                idx = int(m.group(2))
                if m.group(1) == "x":
                    if idx >= self.n:
                        raise ParseError(f"variable {text} out of range for dimension {self.n}", pos)
                    return Var(idx)
                if idx >= self.m:
                    raise ParseError(f"input {text} out of range for {self.m} inputs", pos)
                return Input(idx)
            raise ParseError(f"unknown identifier {text!r}", pos)
        if text == "(":
            e = self.sum()
            self.expect(")")
            return e
        what = "end of input" if kind == "eof" else repr(text)
        raise ParseError(f"unexpected {what}", pos)


def parse(text: str, dim_state: int, dim_input: int = 0, constants: dict | None = None) -> Expr:
    """Parse the text grammar (``+ - * / ^``, ``sin cos exp tanh sigmoid softplus``)."""
    return share([_Parser(text, dim_state, dim_input, constants).parse()])[0]


_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return _PREC.get(type(e), 5)


def _num(v: float) -> str:
    if not math.isfinite(v):
        raise ValueError(f"non-finite constant {v}")
    return repr(float(v))


def pretty(e: Expr) -> str:
    """Render in the same grammar ``parse`` accepts."""
    out: dict[int, str] = {}

    def wrap(child, min_prec):
        s = out[id(child)]
        return f"({s})" if _prec(child) < min_prec else s

    for n in postorder([e]):
        if isinstance(n, Const):
            s = _num(n.value)
        elif isinstance(n, Var):
            s = f"x{n.index}"
        elif isinstance(n, Input):
            s = f"u{n.index}"
        elif isinstance(n, Neg):
            s = "-" + wrap(n.arg, 4)
        elif isinstance(n, Add):
            s = f"{wrap(n.left, 1)} + {wrap(n.right, 2)}"
        elif isinstance(n, Sub):
            s = f"{wrap(n.left, 1)} - {wrap(n.right, 2)}"
        elif isinstance(n, Mul):
            s = f"{wrap(n.left, 2)}*{wrap(n.right, 3)}"
        elif isinstance(n, Div):
            s = f"{wrap(n.left, 2)}/{wrap(n.right, 3)}"
        elif isinstance(n, Pow):
            s = f"{wrap(n.base, 5)}^{n.exp}"
        elif isinstance(n, Func):
            s = f"{n.name}({out[id(n.arg)]})"
        else:  # pragma: no cover
            raise TypeError(type(n))
        out[id(n)] = s
    return out[id(e)]
