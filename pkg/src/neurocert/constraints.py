"""Boolean combinations of sign conditions on expressions.

An :class:`Atom` asserts ``g(x) op 0`` for ``op`` in ``<= < >= >`` or, for
``==``, the relaxed band ``|g(x)| <= tol``. Predicates are evaluated either
exactly at points or three-valued over boxes (certainly-true / certainly-false
/ unknown) via interval enclosures.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import Expr

OPS = ("<=", "<", ">=", ">", "==")
_NEGATED = {"<=": ">", "<": ">=", ">=": "<", ">": "<="}


@dataclass(frozen=True, eq=False)
class Atom:
    expr: Expr
    op: str
    tol: float = 0.0

    def __post_init__(self):
        if self.op not in OPS:
            raise ValueError(f"unknown relation {self.op!r}")
        if self.tol < 0:
            raise ValueError("tolerance must be non-negative")

    def __str__(self):
        if self.op == "==":
            return f"|{ex.pretty(self.expr)}| <= {self.tol!r}"
        return f"{ex.pretty(self.expr)} {self.op} 0"


@dataclass(frozen=True, eq=False)
class And:
    items: tuple

    def __str__(self):
        if not self.items:
            return "true"
        return "(" + " & ".join(str(i) for i in self.items) + ")"


@dataclass(frozen=True, eq=False)
class Or:
    items: tuple

    def __str__(self):
        if not self.items:
            return "false"
        return "(" + " | ".join(str(i) for i in self.items) + ")"


TRUE = And(())
FALSE = Or(())


def conj(*preds) -> And | Atom | Or:
    items = []
    for p in preds:
        if isinstance(p, And):
            items.extend(p.items)
        elif p is FALSE:
            return FALSE
        else:
            items.append(p)
    if len(items) == 1:
        return items[0]
    return And(tuple(items))


def disj(*preds):
    items = []
    for p in preds:
        if isinstance(p, Or):
            items.extend(p.items)
        elif isinstance(p, And) and not p.items:
            return TRUE
        else:
            items.append(p)
    if len(items) == 1:
        return items[0]
    return Or(tuple(items))


def negate(p):
    """Negation with the ``not`` pushed down to the atoms (De Morgan)."""
    if isinstance(p, Atom):
        if p.op == "==":
            return Or((Atom(ex.sub(p.expr, ex.const(p.tol)), ">"), Atom(ex.add(p.expr, ex.const(p.tol)), "<")))
        return Atom(p.expr, _NEGATED[p.op])
    if isinstance(p, And):
        return disj(*(negate(i) for i in p.items)) if p.items else FALSE
    if isinstance(p, Or):
        return conj(*(negate(i) for i in p.items)) if p.items else TRUE
    raise TypeError(type(p))


def atoms(p) -> list[Atom]:
    if isinstance(p, Atom):
        return [p]
    out = []
    for i in p.items:
        out.extend(atoms(i))
    return out


def _atom_point(a: Atom, g, slack: float = 0.0):
    if a.op == "<=":
        return g <= slack
    if a.op == "<":
        return g < slack
    if a.op == ">=":
        return g >= -slack
    if a.op == ">":
        return g > -slack
    return np.abs(g) <= a.tol + slack


def _atom_box(a: Atom, lo, hi):
    with np.errstate(invalid="ignore"):
        if a.op == "<=":
            return hi <= 0, lo > 0
        if a.op == "<":
            return hi < 0, lo >= 0
        if a.op == ">=":
            return lo >= 0, hi < 0
        if a.op == ">":
            return lo > 0, hi <= 0
        return (lo >= -a.tol) & (hi <= a.tol), (lo > a.tol) | (hi < -a.tol)


class PredicateEvaluator:
    """Evaluates a fixed list of predicates, sharing every atom expression."""

    def __init__(self, preds: Sequence):
        self.preds = list(preds)
        exprs: list[Expr] = []
        seen: dict[int, int] = {}
        for p in self.preds:
            for a in atoms(p):
                if id(a.expr) not in seen:
                    seen[id(a.expr)] = len(exprs)
                    exprs.append(a.expr)
        self._exprs = exprs
        self._slot = seen

    def _combine_point(self, p, vals, N, slack=0.0):
        if isinstance(p, Atom):
            return _atom_point(p, vals[self._slot[id(p.expr)]], slack)
        if isinstance(p, And):
            out = np.ones(N, dtype=bool)
            for i in p.items:
                out &= self._combine_point(i, vals, N, slack)
            return out
        out = np.zeros(N, dtype=bool)
        for i in p.items:
            out |= self._combine_point(i, vals, N, slack)
        return out

    def _combine_box(self, p, vals, N):
        if isinstance(p, Atom):
            lo, hi = vals[self._slot[id(p.expr)]]
            return _atom_box(p, lo, hi)
        if isinstance(p, And):
            t = np.ones(N, dtype=bool)
            f = np.zeros(N, dtype=bool)
            for i in p.items:
                ti, fi = self._combine_box(i, vals, N)
                t &= ti
                f |= fi
            return t, f
        t = np.zeros(N, dtype=bool)
        f = np.ones(N, dtype=bool)
        for i in p.items:
            ti, fi = self._combine_box(i, vals, N)
            t |= ti
            f &= fi
        return t, f

    def values(self, X: np.ndarray) -> list[np.ndarray]:
        with np.errstate(all="ignore"):
            return ex.evaluate(self._exprs, X)

    def point(self, X: np.ndarray, slack: float = 0.0) -> list[np.ndarray]:
        """Truth of every predicate at each row of ``X``; with ``slack > 0``
        every atom is relaxed by that amount (the delta-weakened predicate)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        vals = self.values(X) if self._exprs else []
        return [self._combine_point(p, vals, X.shape[0], slack) for p in self.preds]

    def boxes(self, lo: np.ndarray, hi: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
        """``(certainly_true, certainly_false)`` masks of every predicate per box."""
        vals = ex.evaluate_intervals(self._exprs, lo, hi) if self._exprs else []
        return [self._combine_box(p, vals, lo.shape[0]) for p in self.preds]


def holds(p, X) -> np.ndarray:
    return PredicateEvaluator([p]).point(X)[0]
