"""State-space regions: membership, sampling, and symbolic constraints.

Composite regions (``Union``, ``Difference``, ``Complement``) are always
bounded; ``Complement`` carries the rectangle it is taken relative to.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

from . import constraints as cs
from . import expr as ex

MAX_DRAWS = 10_000_000
MIN_ACCEPTANCE = 1e-4


class SamplingError(RuntimeError):
    pass


class RegionError(ValueError):
    pass


def _vec(v) -> np.ndarray:
    return np.asarray(v, dtype=float).reshape(-1)


def _sq_dist_expr(center: np.ndarray) -> ex.Expr:
    total: ex.Expr = ex.ZERO
    for i, c in enumerate(center):
        total = ex.add(total, ex.power(ex.sub(ex.Var(i), ex.const(c)), 2))
    return total


class Region:
    dim: int

    # -- interface -------------------------------------------------------
    def contains(self, p) -> np.ndarray | bool:
        P = np.asarray(p, dtype=float)
        single = P.ndim == 1
        P = np.atleast_2d(P)
        if P.shape[1] != self.dim:
            raise RegionError(f"point dimension {P.shape[1]} != region dimension {self.dim}")
        out = self._contains(P)
        return bool(out[0]) if single else out

    def _contains(self, P: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, np.ndarray]:
        raise NotImplementedError

    def to_constraints(self):
        raise NotImplementedError

    def interior_constraints(self):
        raise NotImplementedError

    def pieces(self) -> list[tuple[np.ndarray, np.ndarray, object]]:
        """``(lb, ub, predicate)`` triples whose union is exactly this region."""
        raise NotImplementedError

    def boundary_pieces(self, tol: float) -> list[tuple[np.ndarray, np.ndarray, object]]:
        """Triples covering the boundary (equalities relaxed by ``tol``)."""
        raise NotImplementedError

    def _boundary_band(self, n: int, band: float, rng) -> np.ndarray:
        raise NotImplementedError

    # -- shared ----------------------------------------------------------
    @property
    def diameter(self) -> float:
        lb, ub = self.bounding_box()
        return float(np.linalg.norm(ub - lb))

    def __or__(self, other):
        return Union((self, other))

    def __sub__(self, other):
        return Difference(self, other)


@dataclass(eq=False)
class Rectangle(Region):
    lb: np.ndarray
    ub: np.ndarray

    def __post_init__(self):
        self.lb = _vec(self.lb)
        self.ub = _vec(self.ub)
        if self.lb.shape != self.ub.shape or self.lb.size == 0:
            raise RegionError("rectangle bounds must be non-empty vectors of equal length")
        if not np.all(self.lb < self.ub):
            raise RegionError(f"rectangle requires lb < ub, got lb={self.lb.tolist()} ub={self.ub.tolist()}")
        self.dim = self.lb.size

    def _contains(self, P):
        return np.all((P >= self.lb) & (P <= self.ub), axis=1)

    def bounding_box(self):
        return self.lb.copy(), self.ub.copy()

    def to_constraints(self):
        items = []
        for i in range(self.dim):
            xi = ex.Var(i)
            items.append(cs.Atom(ex.sub(ex.const(self.lb[i]), xi), "<="))
            items.append(cs.Atom(ex.sub(xi, ex.const(self.ub[i])), "<="))
        return cs.conj(*items)

    def interior_constraints(self):
        return cs.conj(*(cs.Atom(a.expr, "<") for a in cs.atoms(self.to_constraints())))

    def pieces(self):
        return [(self.lb.copy(), self.ub.copy(), cs.TRUE)]

    def boundary_pieces(self, tol):
        out = []
        for i in range(self.dim):
            for side in (self.lb[i], self.ub[i]):
                lb, ub = self.lb.copy(), self.ub.copy()
                lb[i] = ub[i] = side
                out.append((lb, ub, cs.TRUE))
        return out

    def boundary_distance(self, P):
        P = np.atleast_2d(P)
        inside = self._contains(P)
        d_in = np.minimum(P - self.lb, self.ub - P).min(axis=1)
        d_out = np.linalg.norm(np.maximum(0, np.maximum(self.lb - P, P - self.ub)), axis=1)
        return np.where(inside, d_in, d_out)

    def _boundary_band(self, n, band, rng):
        faces = 2 * self.dim
        # uniform per-face allocation
        face_ids = np.arange(n) % faces
        P = rng.uniform(self.lb, self.ub, size=(n, self.dim))
        axis = face_ids // 2
        upper = face_ids % 2 == 1
        rows = np.arange(n)
        base = np.where(upper, self.ub[axis], self.lb[axis])
        P[rows, axis] = base + rng.uniform(-band, band, size=n)
        return P

    def __repr__(self):
        return f"Rectangle({self.lb.tolist()}, {self.ub.tolist()})"


@dataclass(eq=False)
class Sphere(Region):
    center: np.ndarray
    radius: float

    def __post_init__(self):
        self.center = _vec(self.center)
        self.radius = float(self.radius)
        if self.radius < 0 or not math.isfinite(self.radius):
            raise RegionError("sphere radius must be a finite non-negative number")
        self.dim = self.center.size

    def _contains(self, P):
        return np.sum((P - self.center) ** 2, axis=1) <= self.radius**2

    def bounding_box(self):
        return self.center - self.radius, self.center + self.radius

    def _g(self):
        return ex.sub(_sq_dist_expr(self.center), ex.const(self.radius**2))

    def to_constraints(self):
        return cs.Atom(self._g(), "<=")

    def interior_constraints(self):
        return cs.Atom(self._g(), "<")

    def pieces(self):
        lb, ub = self.bounding_box()
        return [(lb, ub, self.to_constraints())]

    def boundary_pieces(self, tol):
        lb, ub = self.bounding_box()
        # |r'^2 - r^2| ~ 2 r |r' - r|
        sq_tol = tol * (2 * self.radius + tol)
        return [(lb - tol, ub + tol, cs.Atom(self._g(), "==", sq_tol))]

    def boundary_distance(self, P):
        P = np.atleast_2d(P)
        return np.abs(np.linalg.norm(P - self.center, axis=1) - self.radius)

    def _boundary_band(self, n, band, rng):
        d = rng.standard_normal((n, self.dim))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = np.maximum(self.radius + rng.uniform(-band, band, size=(n, 1)), 0.0)
        return self.center + r * d

    def __repr__(self):
        return f"Sphere({self.center.tolist()}, {self.radius})"


@dataclass(eq=False)
class Torus(Region):
    """Ball of radius ``r_outer`` with the closed ball ``r_inner`` removed.

    The two radii are normalised so the smaller one is always the hole.
    """

    center: np.ndarray
    r_inner: float
    r_outer: float

    def __post_init__(self):
        self.center = _vec(self.center)
        a, b = float(self.r_inner), float(self.r_outer)
        self.r_inner, self.r_outer = min(a, b), max(a, b)
        if self.r_inner < 0 or self.r_inner == self.r_outer:
            raise RegionError("torus needs 0 <= r_inner < r_outer")
        self.dim = self.center.size
        self._outer = Sphere(self.center, self.r_outer)
        self._inner = Sphere(self.center, self.r_inner)

    def _contains(self, P):
        return self._outer._contains(P) & ~self._inner._contains(P)

    def bounding_box(self):
        return self._outer.bounding_box()

    def to_constraints(self):
        return cs.conj(self._outer.to_constraints(), cs.negate(self._inner.to_constraints()))

    def interior_constraints(self):
        return cs.conj(self._outer.interior_constraints(), cs.negate(self._inner.to_constraints()))

    def pieces(self):
        lb, ub = self.bounding_box()
        return [(lb, ub, self.to_constraints())]

    def boundary_pieces(self, tol):
        return self._outer.boundary_pieces(tol) + self._inner.boundary_pieces(tol)

    def boundary_distance(self, P):
        return np.minimum(self._outer.boundary_distance(P), self._inner.boundary_distance(P))

    def _boundary_band(self, n, band, rng):
        w_out = self.r_outer ** (self.dim - 1)
        w_in = self.r_inner ** (self.dim - 1)
        n_in = int(round(n * w_in / (w_in + w_out)))
        return np.vstack([
            self._outer._boundary_band(n - n_in, band, rng),
            self._inner._boundary_band(n_in, band, rng),
        ])

    def __repr__(self):
        return f"Torus({self.center.tolist()}, {self.r_inner}, {self.r_outer})"


@dataclass(eq=False)
class Cylinder(Region):
    """Points of ``within`` whose projection onto ``axes`` lies in a closed ball."""

    center: np.ndarray
    radius: float
    axes: tuple
    within: Rectangle

    def __post_init__(self):
        self.center = _vec(self.center)
        self.radius = float(self.radius)
        self.axes = tuple(int(a) for a in self.axes)
        if len(self.axes) != self.center.size:
            raise RegionError("cylinder needs one centre coordinate per axis")
        if self.radius <= 0:
            raise RegionError("cylinder radius must be positive")
        self.dim = self.within.dim
        if max(self.axes) >= self.dim:
            raise RegionError("cylinder axis out of range")

    def _g(self):
        total: ex.Expr = ex.ZERO
        for c, a in zip(self.center, self.axes):
            total = ex.add(total, ex.power(ex.sub(ex.Var(a), ex.const(c)), 2))
        return ex.sub(total, ex.const(self.radius**2))

    def _contains(self, P):
        d2 = np.sum((P[:, list(self.axes)] - self.center) ** 2, axis=1)
        return (d2 <= self.radius**2) & self.within._contains(P)

    def bounding_box(self):
        lb, ub = self.within.bounding_box()
        for c, a in zip(self.center, self.axes):
            lb[a] = max(lb[a], c - self.radius)
            ub[a] = min(ub[a], c + self.radius)
        return lb, ub

    def to_constraints(self):
        return cs.conj(cs.Atom(self._g(), "<="), self.within.to_constraints())

    def interior_constraints(self):
        return cs.conj(cs.Atom(self._g(), "<"), self.within.interior_constraints())

    def pieces(self):
        lb, ub = self.bounding_box()
        return [(lb, ub, cs.Atom(self._g(), "<="))]

    def boundary_pieces(self, tol):
        lb, ub = self.bounding_box()
        sq_tol = tol * (2 * self.radius + tol)
        for a in self.axes:
            lb[a] -= tol
            ub[a] += tol
        return [(lb, ub, cs.Atom(self._g(), "==", sq_tol))]

    def boundary_distance(self, P):
        P = np.atleast_2d(P)
        return np.abs(np.linalg.norm(P[:, list(self.axes)] - self.center, axis=1) - self.radius)

    def _boundary_band(self, n, band, rng):
        lb, ub = self.bounding_box()
        P = rng.uniform(lb, ub, size=(n, self.dim))
        d = rng.standard_normal((n, len(self.axes)))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        r = np.maximum(self.radius + rng.uniform(-band, band, size=(n, 1)), 0.0)
        P[:, list(self.axes)] = self.center + r * d
        return P

    def __repr__(self):
        return f"Cylinder({self.center.tolist()}, {self.radius}, {list(self.axes)})"


@dataclass(eq=False)
class Union(Region):
    parts: tuple

    def __post_init__(self):
        flat = []
        for p in self.parts:
            flat.extend(p.parts if isinstance(p, Union) else [p])
        if not flat:
            raise RegionError("empty union")
        dims = {p.dim for p in flat}
        if len(dims) != 1:
            raise RegionError("union of regions with different dimensions")
        self.parts = tuple(flat)
        self.dim = dims.pop()

    def _contains(self, P):
        out = np.zeros(P.shape[0], dtype=bool)
        for p in self.parts:
            out |= p._contains(P)
        return out

    def bounding_box(self):
        boxes = [p.bounding_box() for p in self.parts]
        return np.min([b[0] for b in boxes], axis=0), np.max([b[1] for b in boxes], axis=0)

    def to_constraints(self):
        return cs.disj(*(p.to_constraints() for p in self.parts))

    def interior_constraints(self):
        return cs.disj(*(p.interior_constraints() for p in self.parts))

    def pieces(self):
        return [pc for p in self.parts for pc in p.pieces()]

    def boundary_pieces(self, tol):
        out = []
        for i, p in enumerate(self.parts):
            others = [q.interior_constraints() for j, q in enumerate(self.parts) if j != i]
            not_inside = cs.negate(cs.disj(*others)) if others else cs.TRUE
            out.extend((lb, ub, cs.conj(pred, not_inside)) for lb, ub, pred in p.boundary_pieces(tol))
        return out

    def _boundary_band(self, n, band, rng):
        k = len(self.parts)
        chunks = [p._boundary_band(n // k + (1 if i < n % k else 0), band, rng) for i, p in enumerate(self.parts)]
        return np.vstack(chunks)

    def __repr__(self):
        return " | ".join(repr(p) for p in self.parts)


@dataclass(eq=False)
class Difference(Region):
    a: Region
    b: Region

    def __post_init__(self):
        if self.a.dim != self.b.dim:
            raise RegionError("difference of regions with different dimensions")
        self.dim = self.a.dim

    def _contains(self, P):
        return self.a._contains(P) & ~self.b._contains(P)

    def bounding_box(self):
        return self.a.bounding_box()

    def to_constraints(self):
        return cs.conj(self.a.to_constraints(), cs.negate(self.b.to_constraints()))

    def interior_constraints(self):
        return cs.conj(self.a.interior_constraints(), cs.negate(self.b.to_constraints()))

    def pieces(self):
        not_b = cs.negate(self.b.to_constraints())
        return [(lb, ub, cs.conj(pred, not_b)) for lb, ub, pred in self.a.pieces()]

    def boundary_pieces(self, tol):
        not_int_b = cs.negate(self.b.interior_constraints())
        in_a = self.a.to_constraints()
        return [(lb, ub, cs.conj(pred, not_int_b)) for lb, ub, pred in self.a.boundary_pieces(tol)] + [
            (lb, ub, cs.conj(pred, in_a)) for lb, ub, pred in self.b.boundary_pieces(tol)
        ]

    def _boundary_band(self, n, band, rng):
        na = n // 2
        pa = self.a._boundary_band(na, band, rng)
        pb = self.b._boundary_band(n - na, band, rng)
        return np.vstack([pa, pb])

    def __repr__(self):
        return f"({self.a!r} \\ {self.b!r})"


@dataclass(eq=False)
class Complement(Difference):
    """``within \\ inner``; the bounding rectangle is mandatory."""

    def __init__(self, inner: Region, within: Rectangle):
        if not isinstance(within, Rectangle):
            raise RegionError("complement must be taken within a bounding rectangle")
        super().__init__(within, inner)

    @property
    def inner(self):
        return self.b

    @property
    def within(self):
        return self.a

    def __repr__(self):
        return f"Complement({self.b!r})"


# ----------------------------------------------------------------------------
# sampling


@dataclass
class SampleBatch:
    points: np.ndarray
    source: str = ""
    kind: str = "interior"


def sample_interior(r: Region, n: int, rng: np.random.Generator, source: str = "") -> SampleBatch:
    """Uniform rejection sampling from the bounding box of ``r``."""
    lb, ub = r.bounding_box()
    if n <= 0:
        return SampleBatch(np.zeros((0, r.dim)), source, "interior")
    if np.any(ub - lb <= 0):
        raise SamplingError(f"degenerate region {r!r}: bounding box has zero volume")
    accepted: list[np.ndarray] = []
    have = draws = 0
    chunk = max(1024, 4 * n)
    while have < n:
        P = rng.uniform(lb, ub, size=(chunk, r.dim))
        draws += chunk
        keep = P[r._contains(P)]
        accepted.append(keep)
        have += len(keep)
        if draws >= MAX_DRAWS and have / draws < MIN_ACCEPTANCE:
            raise SamplingError(f"acceptance rate {have / draws:.2e} too low for region {r!r}")
        if have and have < n:
            # size the next chunk from the observed acceptance rate
            chunk = min(MAX_DRAWS, max(1024, int(1.2 * (n - have) * draws / have)))
        elif not have:
            chunk = min(MAX_DRAWS, chunk * 4)
    return SampleBatch(np.vstack(accepted)[:n], source, "interior")


def sample_boundary(r: Region, n: int, band: float, rng: np.random.Generator, source: str = "") -> SampleBatch:
    """Points within ``band`` of the boundary of ``r``."""
    if band <= 0:
        raise ValueError("band must be positive")
    if isinstance(r, (Rectangle, Sphere, Torus, Cylinder)):
        return SampleBatch(r._boundary_band(n, band, rng), source, "boundary-band")
    if isinstance(r, (Union, Difference)):
        # composite boundaries: component bands, kept where they are not deep inside
        # another component (superset of the true boundary band)
        kept = []
        have = 0
        for _ in range(20):
            P = r._boundary_band(4 * n, band, rng)
            P = P[_composite_boundary_mask(r, P)]
            kept.append(P)
            have += len(P)
            if have >= n:
                return SampleBatch(np.vstack(kept)[:n], source, "boundary-band")
        raise SamplingError(f"could not sample the boundary band of {r!r}")
    raise RegionError(f"unsupported region for boundary sampling: {type(r).__name__}")


def _composite_boundary_mask(r: Region, P: np.ndarray) -> np.ndarray:
    pieces = r.boundary_pieces(0.0)
    out = np.zeros(len(P), dtype=bool)
    for lb, ub, pred in pieces:
        # ignore the equality part of the piece; keep the side conditions
        side = [a for a in cs.atoms(pred) if a.op != "=="]
        if not side:
            out |= True
            continue
        ok = cs.holds(cs.conj(*side), P) if len(side) > 1 else cs.holds(side[0], P)
        out |= ok
    return out


def default_band(r: Region, fraction: float = 0.05) -> float:
    return fraction * r.diameter


# ----------------------------------------------------------------------------
# Region shorthand: Rectangle(lb, ub), Sphere(c, r), Torus(c, r1, r2),
# Complement(R), unions with "|", differences with "\"

_REGION_TOKEN = re.compile(r"\s*(Rectangle|Sphere|Torus|Cylinder|Complement|\[|\]|\(|\)|,|\||\\|[^\s\[\](),|\\]+)")


def parse_region(text: str, domain: Region | None = None) -> Region:
    toks = []
    pos = 0
    while pos < len(text):
        m = _REGION_TOKEN.match(text, pos)
        if not m:
            break
        toks.append(m.group(1))
        pos = m.end()
    if text[pos:].strip():
        raise RegionError(f"cannot tokenise region text near offset {pos}: {text!r}")
    toks.append(None)
    i = 0

    def peek():
        return toks[i]

    def take(expected=None):
        nonlocal i
        t = toks[i]
        if expected is not None and t != expected:
            raise RegionError(f"expected {expected!r} but found {t!r} in {text!r}")
        i += 1
        return t

    def number():
        parts = []
        while peek() not in (",", "]", ")", None):
            parts.append(take())
        src = " ".join(parts)
        try:
            e = ex.parse(src, 0, 0, constants={"pi": math.pi})
        except ex.ParseError as exc:
            raise RegionError(f"bad number {src!r}: {exc}") from exc
        if not isinstance(e, ex.Const):
            raise RegionError(f"not a constant: {src!r}")
        return e.value

    def vector():
        take("[")
        vals = [number()]
        while peek() == ",":
            take()
            vals.append(number())
        take("]")
        return vals

    def term():
        t = take()
        if t == "(":
            r = region()
            take(")")
            return r
        if t == "Rectangle":
            take("(")
            lb = vector()
            take(",")
            ub = vector()
            take(")")
            return Rectangle(lb, ub)
        if t == "Sphere":
            take("(")
            c = vector()
            take(",")
            rad = number()
            take(")")
            return Sphere(c, rad)
        if t == "Torus":
            take("(")
            c = vector()
            take(",")
            r1 = number()
            take(",")
            r2 = number()
            take(")")
            return Torus(c, r1, r2)
        if t == "Cylinder":
            take("(")
            c = vector()
            take(",")
            rad = number()
            take(",")
            axes = vector()
            take(")")
            if domain is None or not isinstance(domain, Rectangle):
                raise RegionError("Cylinder(...) needs a rectangular domain to be bounded by")
            return Cylinder(c, rad, tuple(int(a) for a in axes), domain)
        if t == "Complement":
            take("(")
            inner = region()
            take(")")
            if domain is None or not isinstance(domain, Rectangle):
                raise RegionError("Complement(...) needs a rectangular domain to be taken within")
            return Complement(inner, domain)
        raise RegionError(f"unexpected token {t!r} in {text!r}")

    def region():
        r = term()
        while peek() in ("|", "\\"):
            op = take()
            rhs = term()
            r = Union((r, rhs)) if op == "|" else Difference(r, rhs)
        return r

    out = region()
    if peek() is not None:
        raise RegionError(f"trailing input {peek()!r} in {text!r}")
    return out
