"""Interval branch-and-bound decision procedure for negated certificate conditions.

A query asks whether some point of a domain satisfies a goal predicate (the
negation of a certificate condition). Boxes are processed depth-first in
batches; every atom is enclosed with outward-rounded interval arithmetic.

Per box:

* prune when the domain or the goal is certainly false on it;
* if the midpoint satisfies the domain and the goal exactly, report a
  ``Counterexample``;
* if every side is narrower than ``delta`` and the midpoint satisfies the
  delta-weakened domain and goal (each atom relaxed by ``delta``), report
  ``DeltaSat`` there;
* otherwise bisect the widest side.

Boxes below ``delta`` that cannot be refuted keep splitting until the
weakened check passes; enclosures tighten as boxes shrink, and a box
narrower than ``delta * TINY`` is reported as ``DeltaSat`` regardless.

An empty queue means ``Valid``. Budgets (splits, wall time) end in
``ResourceOut``, never in ``Valid``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import constraints as cs
from . import expr as ex
from .certificate import Problem, VerificationQuery, build_conditions, build_query


TINY = 2.0**-20


@dataclass
class Valid:
    condition: str = ""
    boxes: int = 0

    ok = True


@dataclass
class Counterexample:
    point: np.ndarray
    condition: str = ""
    magnitude: float = 0.0
    boxes: int = 0

    ok = False


@dataclass
class DeltaSat:
    point: np.ndarray
    condition: str = ""
    magnitude: float = 0.0
    boxes: int = 0

    ok = False


@dataclass
class ResourceOut:
    condition: str = ""
    reason: str = ""
    boxes: int = 0

    ok = False


@dataclass
class Query:
    pieces: list  # (lb, ub, domain predicate)
    goal: object
    delta: float = 1e-4
    max_splits: int = 2_000_000
    timeout: float = 300.0
    name: str = ""
    # the unrelaxed condition, used to grade witnesses (optional)
    quantity: ex.Expr | None = None


@dataclass
class VerifierConfig:
    delta: float = 1e-4
    max_splits: int = 2_000_000
    timeout: float = 300.0
    batch: int = 4096


def _witness_magnitude(q: Query, x: np.ndarray) -> float:
    if q.quantity is None:
        return 0.0
    return float(ex.evaluate([q.quantity], x[None, :])[0][0])


def check(q: Query, batch: int = 4096) -> Valid | Counterexample | DeltaSat | ResourceOut:
    """Decide ``exists x in domain: goal(x)`` up to ``delta``."""
    if q.delta <= 0:
        raise ValueError("delta must be positive")
    start = time.monotonic()
    pieces = [(np.asarray(lb, float), np.asarray(ub, float), pred) for lb, ub, pred in q.pieces]
    if not pieces:
        return Valid(q.name, 0)
    for lb, ub, _ in pieces:
        if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
            raise ValueError("query boxes must be finite")
    evaluators = [cs.PredicateEvaluator([pred, q.goal]) for _, _, pred in pieces]
    splits = 0
    processed = 0
    # LIFO of pending batches per piece: depth-first in chunks of ``batch`` boxes
    for k, (lb0, ub0, _) in enumerate(pieces):
        ev = evaluators[k]
        stack = [(lb0[None, :], ub0[None, :])]
        while stack:
            lo, hi = stack.pop()
            if len(lo) > batch:
                stack.append((lo[:-batch], hi[:-batch]))
                lo, hi = lo[-batch:], hi[-batch:]
            if time.monotonic() - start > q.timeout:
                return ResourceOut(q.name, "timeout", processed)
            L, H = lo, hi
            processed += len(L)
            with np.errstate(all="ignore"):
                (dom_t, dom_f), (goal_t, goal_f) = ev.boxes(L, H)
            alive = ~(dom_f | goal_f)
            if not np.any(alive):
                continue
            L, H = L[alive], H[alive]
            M = 0.5 * (L + H)
            dom_p, goal_p = ev.point(M)
            hit = np.flatnonzero(dom_p & goal_p)
            if hit.size:
                x = M[hit[0]]
                return Counterexample(x, q.name, _witness_magnitude(q, x), processed)
            W = H - L
            small = np.flatnonzero(np.all(W < q.delta, axis=1))
            if small.size:
                dom_w, goal_w = ev.point(M[small], slack=q.delta)
                weak = small[dom_w & goal_w]
                if not weak.size:
                    weak = small[np.all(W[small] < q.delta * TINY, axis=1)]
                if weak.size:
                    x = M[weak[0]]
                    return DeltaSat(x, q.name, _witness_magnitude(q, x), processed)
            axis = np.argmax(W, axis=1)
            rows = np.arange(len(L))
            mid = M[rows, axis]
            H1 = H.copy()
            H1[rows, axis] = mid
            L2 = L.copy()
            L2[rows, axis] = mid
            stack.append((np.vstack([L, L2]), np.vstack([H1, H])))
            splits += len(L)
            if splits > q.max_splits:
                return ResourceOut(q.name, "split budget exhausted", processed)
    return Valid(q.name, processed)


def query_from(vq: VerificationQuery, cfg: VerifierConfig) -> Query:
    return Query(vq.pieces, vq.goal, cfg.delta, cfg.max_splits, cfg.timeout, vq.condition.name, vq.quantity)


def verify_conditions(p: Problem, functions, f_closed, params, cfg: VerifierConfig | None = None,
                      conditions=None, short_circuit: bool = True) -> list:
    """Check each condition; returns ``(condition, verdict)`` pairs in order."""
    cfg = cfg or VerifierConfig(delta=p.delta)
    conds = conditions if conditions is not None else build_conditions(p)
    out = []
    cache: dict = {}
    for c in conds:
        vq = build_query(p, c, functions, f_closed, params, cache)
        verdict = check(query_from(vq, cfg), cfg.batch)
        out.append((c, verdict))
        if short_circuit and not verdict.ok:
            break
    return out


# ----------------------------------------------------------------------------
# SMT-LIB 2 export (diagnostic)


def _smt_expr(e: ex.Expr) -> str:
    memo: dict[int, str] = {}
    for n in ex.postorder([e]):
        if isinstance(n, ex.Const):
            memo[id(n)] = _smt_signed(n.value)
        elif isinstance(n, ex.Var):
            memo[id(n)] = f"x{n.index}"
        elif isinstance(n, ex.Input):
            memo[id(n)] = f"u{n.index}"
        elif isinstance(n, ex.Neg):
            memo[id(n)] = f"(- {memo[id(n.arg)]})"
        elif isinstance(n, ex._Binary):
            op = {ex.Add: "+", ex.Sub: "-", ex.Mul: "*", ex.Div: "/"}[type(n)]
            memo[id(n)] = f"({op} {memo[id(n.left)]} {memo[id(n.right)]})"
        elif isinstance(n, ex.Pow):
            b = memo[id(n.base)]
            memo[id(n)] = "1.0" if n.exp == 0 else ("(* " + " ".join([b] * n.exp) + ")" if n.exp > 1 else b)
        elif isinstance(n, ex.Func):
            a = memo[id(n.arg)]
            if n.name == "sigmoid":
                memo[id(n)] = f"(/ 1.0 (+ 1.0 (exp (- {a}))))"
            elif n.name == "softplus":
                memo[id(n)] = f"(log (+ 1.0 (exp {a})))"
            else:
                memo[id(n)] = f"({n.name} {a})"
    return memo[id(e)]


def _smt_num(v: float) -> str:
    s = repr(float(v))
    if "e" in s or "E" in s:
        s = f"{v:.20f}".rstrip("0")
        if s.endswith("."):
            s += "0"
    return s


def _smt_signed(v: float) -> str:
    return f"(- {_smt_num(-v)})" if v < 0 else _smt_num(v)


def _smt_pred(p) -> str:
    if isinstance(p, cs.Atom):
        g = _smt_expr(p.expr)
        if p.op == "==":
            t = _smt_num(p.tol)
            return f"(and (<= {g} {t}) (>= {g} (- {t})))"
        return f"({p.op} {g} 0.0)"
    if isinstance(p, cs.And):
        return "true" if not p.items else "(and " + " ".join(_smt_pred(i) for i in p.items) + ")"
    return "false" if not p.items else "(or " + " ".join(_smt_pred(i) for i in p.items) + ")"


def to_smtlib(q: Query) -> str:
    dim = np.asarray(q.pieces[0][0]).size if q.pieces else 0
    lines = ["(set-logic QF_NRA)"]
    lines += [f"(declare-fun x{i} () Real)" for i in range(dim)]
    disj = []
    for lb, ub, pred in q.pieces:
        box = [f"(<= {_smt_signed(lb[i])} x{i})" for i in range(dim)]
        box += [f"(<= x{i} {_smt_signed(ub[i])})" for i in range(dim)]
        disj.append("(and " + " ".join(box) + " " + _smt_pred(pred) + ")")
    dom = disj[0] if len(disj) == 1 else "(or " + " ".join(disj) + ")"
    lines.append(f"(assert {dom})")
    lines.append(f"(assert {_smt_pred(q.goal)})")
    lines.append("(check-sat)")
    lines.append("(exit)")
    return "\n".join(lines) + "\n"
