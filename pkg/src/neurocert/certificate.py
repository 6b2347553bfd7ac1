"""Property problems and their certificate conditions.

Every condition has the shape ``q(x) op threshold`` for all ``x`` in some
domain, where ``q`` is a candidate function (``V`` or ``B``) or its Lie
derivative. The same object drives both sides of the loop:

* the learner samples the domain and penalises ``m(p * (q - threshold))``;
* the verifier searches the domain for a point satisfying the negation.

Domains are described structurally (base region, boundary flag, excluded
regions, level-set restrictions on the candidates) so they can be turned into
sample filters or symbolic constraints.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from . import constraints as cs
from . import expr as ex
from .expr import Expr, VectorField
from .geometry import Complement, Difference, Rectangle, Region, Sphere, sample_boundary, sample_interior


class ProblemError(ValueError):
    pass


class Kind(enum.Enum):
    STABILITY = "stability"
    ROA = "roa"
    SAFETY = "safety"
    SWA = "swa"
    RWA = "rwa"
    RSWA = "rswa"
    RAR = "rar"

    @classmethod
    def parse(cls, text: str) -> Kind:
        key = text.strip().lower().replace("-", "").replace("_", "")
        aliases = {"lyapunov": "stability", "barrier": "safety", "stablesafe": "swa", "rws": "rwa", "rsws": "rswa"}
        key = aliases.get(key, key)
        for k in cls:
            if k.value == key:
                return k
        raise ProblemError(f"unknown property kind {text!r}; expected one of {[k.value for k in cls]}")


REQUIRED = {
    Kind.STABILITY: ("domain",),
    Kind.ROA: ("domain", "init"),
    Kind.SAFETY: ("domain", "init", "unsafe"),
    Kind.SWA: ("domain", "init", "unsafe"),
    Kind.RWA: ("domain", "init", "safe", "goal"),
    Kind.RSWA: ("domain", "init", "safe", "final"),
    Kind.RAR: ("domain", "init", "safe", "goal", "final"),
}

# which candidate functions each kind needs
FUNCTIONS = {
    Kind.STABILITY: ("V",),
    Kind.ROA: ("V",),
    Kind.SAFETY: ("B",),
    Kind.SWA: ("V", "B"),
    Kind.RWA: ("V",),
    Kind.RSWA: ("V",),
    Kind.RAR: ("V", "B"),
}

REGION_NAMES = ("domain", "init", "unsafe", "safe", "goal", "final")


@dataclass
class Problem:
    kind: Kind
    dynamics: VectorField
    regions: dict
    gamma: float = 0.1
    epsilon: float = 0.01
    delta: float = 1e-4
    roa_margin: float = 0.05
    name: str = ""

    def __post_init__(self):
        if isinstance(self.kind, str):
            self.kind = Kind.parse(self.kind)
        self.regions = {k: v for k, v in self.regions.items() if v is not None}
        unknown = set(self.regions) - set(REGION_NAMES)
        if unknown:
            raise ProblemError(f"unknown region names {sorted(unknown)}")
        for key in ("gamma", "epsilon", "delta"):
            if not getattr(self, key) > 0:
                raise ProblemError(f"{key} must be positive")
        n = self.dynamics.dim_state
        for k, r in self.regions.items():
            if r.dim != n:
                raise ProblemError(f"region {k!r} has dimension {r.dim}, dynamics have {n}")
        dom = self.regions.get("domain")
        # safe and unsafe are complements of each other inside the domain
        if dom is not None and "safe" not in self.regions and "unsafe" in self.regions:
            self.regions["safe"] = Difference(dom, self.regions["unsafe"])
        if dom is not None and "unsafe" not in self.regions and "safe" in self.regions:
            lb, ub = dom.bounding_box()
            self.regions["unsafe"] = Complement(self.regions["safe"], Rectangle(lb, ub))
        missing = [k for k in REQUIRED[self.kind] if k not in self.regions]
        if missing:
            raise ProblemError(f"{self.kind.value} problem is missing region(s): {', '.join(missing)}")

    @property
    def dim(self) -> int:
        return self.dynamics.dim_state

    @property
    def has_controller(self) -> bool:
        return self.dynamics.dim_input > 0

    @property
    def functions(self) -> tuple:
        return FUNCTIONS[self.kind]

    def region(self, key: str) -> Region:
        if key == "origin":
            return Sphere(np.zeros(self.dim), self.epsilon)
        return self.regions[key]

    def validate_containments(self, rng: np.random.Generator, n: int = 10_000) -> None:
        """Monte-Carlo check of the set relations each certificate assumes."""
        checks = []
        if self.kind in (Kind.RWA, Kind.RSWA, Kind.RAR):
            checks += [("init", "safe"), ("goal", "safe"), ("final", "safe")]
        if self.kind == Kind.RAR:
            checks.append(("goal", "final"))
        if self.kind in (Kind.ROA, Kind.SAFETY, Kind.SWA):
            checks.append(("init", "domain"))
        for inner, outer in checks:
            if inner not in self.regions or outer not in self.regions:
                continue
            P = sample_interior(self.regions[inner], n, rng).points
            inside = self.regions[outer].contains(P)
            if not np.all(inside):
                bad = P[~inside][0]
                raise ProblemError(f"region {inner!r} is not contained in {outer!r} (e.g. {bad.tolist()})")
        if self.kind in (Kind.SAFETY, Kind.SWA):
            P = sample_interior(self.regions["init"], n, rng).points
            if np.any(self.regions["unsafe"].contains(P)):
                raise ProblemError("initial and unsafe regions intersect")


# ----------------------------------------------------------------------------
# conditions


@dataclass(frozen=True)
class Level:
    """Restriction ``target op value`` on the domain; ``value`` is a number or
    a symbolic name resolved at run time ("roa" level, "beta")."""

    target: str
    op: str  # "<=", ">=", or "band" (|target| <= value)
    value: float | str = 0.0


@dataclass(frozen=True)
class Condition:
    name: str
    target: str
    quantity: str  # "value" | "lie"
    op: str
    threshold: float | str  # number or "beta"
    base: str
    boundary: bool = False
    exclude: tuple = ()
    levels: tuple = ()
    verify_only: bool = False
    beta_dependent: bool = False

    @property
    def sign(self) -> float:
        """``p`` of the loss: +1 for upper bounds, -1 for lower bounds."""
        return 1.0 if self.op in ("<", "<=") else -1.0

    @property
    def strict(self) -> bool:
        return self.op in ("<", ">")

    def describe(self) -> str:
        q = self.target if self.quantity == "value" else f"d{self.target}/dt"
        dom = ("boundary of " if self.boundary else "") + self.base
        if self.exclude:
            dom += " minus " + ", ".join(self.exclude)
        for lv in self.levels:
            dom += f" with {lv.target} {lv.op} {lv.value}"
        return f"{q} {self.op} {self.threshold} on {dom}"


def _stability_conditions(t: str = "V", restrict: bool = False) -> list[Condition]:
    levels = (Level(t, "<=", "roa"),) if restrict else ()
    return [
        Condition(f"{t}_positive", t, "value", ">", 0.0, "domain", exclude=("origin",), levels=levels),
        Condition(f"{t}_decrease", t, "lie", "<", 0.0, "domain", exclude=("origin",), levels=levels),
    ]


def _roa_conditions(t: str = "V") -> list[Condition]:
    return _stability_conditions(t, restrict=True) + [
        Condition(f"{t}_init_in_level", t, "value", "<=", "roa", "init", verify_only=True),
    ]


def _barrier_conditions(t: str, init: str, unsafe: str, unsafe_boundary: bool) -> list[Condition]:
    return [
        Condition(f"{t}_init", t, "value", "<=", 0.0, init),
        Condition(f"{t}_unsafe", t, "value", ">", 0.0, unsafe, boundary=unsafe_boundary),
        Condition(f"{t}_flow", t, "lie", "<", 0.0, "domain", levels=(Level(t, "band", "band"),)),
    ]


def _rwa_conditions(gamma: float, exclude: str) -> list[Condition]:
    return [
        Condition("V_init", "V", "value", "<=", 0.0, "init"),
        Condition("V_safe_boundary", "V", "value", ">", 0.0, "safe", boundary=True),
        Condition("V_reach", "V", "lie", "<=", -gamma, "safe", exclude=(exclude,), levels=(Level("V", "<=", 0.0),)),
    ]


def build_conditions(p: Problem) -> list[Condition]:
    k = p.kind
    if k == Kind.STABILITY:
        return _stability_conditions()
    if k == Kind.ROA:
        return _roa_conditions()
    if k == Kind.SAFETY:
        return _barrier_conditions("B", "init", "unsafe", False)
    if k == Kind.SWA:
        return _roa_conditions() + _barrier_conditions("B", "init", "unsafe", False)
    if k == Kind.RWA:
        return _rwa_conditions(p.gamma, "goal")
    if k == Kind.RSWA:
        return _rwa_conditions(p.gamma, "final") + [
            Condition("V_final_boundary", "V", "value", ">", "beta", "final", boundary=True, beta_dependent=True),
            Condition(
                "V_stay", "V", "lie", "<=", -p.gamma, "final",
                levels=(Level("V", ">=", "beta"),), beta_dependent=True,
            ),
        ]
    if k == Kind.RAR:
        return _rwa_conditions(p.gamma, "goal") + _barrier_conditions("B", "goal", "final", True)
    raise ProblemError(k)  # pragma: no cover


def resolve(value, params: Mapping[str, float]) -> float:
    if isinstance(value, str):
        if value not in params:
            raise KeyError(f"parameter {value!r} has not been set")
        return float(params[value])
    return float(value)


# ----------------------------------------------------------------------------
# verification side


@dataclass
class VerificationQuery:
    """Pieces ``(lb, ub, domain predicate)`` plus the goal (negated condition)."""

    condition: Condition
    pieces: list
    goal: object
    quantity: Expr
    threshold: float


def candidate_quantity(cond: Condition, functions: Mapping[str, Expr], f: VectorField) -> Expr:
    c = functions[cond.target]
    return c if cond.quantity == "value" else ex.lie_derivative(c, f)


def holds_atom(cond: Condition, q: Expr, threshold: float) -> cs.Atom:
    """The condition itself as an atom ``q - threshold op 0``."""
    return cs.Atom(ex.sub(q, ex.const(threshold)), cond.op)


def level_atoms(cond: Condition, functions: Mapping[str, Expr], params: Mapping[str, float]) -> list:
    out = []
    for lv in cond.levels:
        c = functions[lv.target]
        v = resolve(lv.value, params)
        if lv.op == "band":
            out.append(cs.Atom(c, "==", v))
        else:
            out.append(cs.Atom(ex.sub(c, ex.const(v)), lv.op))
    return out


def build_query(
    p: Problem,
    cond: Condition,
    functions: Mapping[str, Expr],
    f_closed: VectorField,
    params: Mapping[str, float],
    lie_cache: dict | None = None,
) -> VerificationQuery:
    """Turn ``cond`` into a verifier query over exact (rounded) symbolic candidates."""
    if cond.quantity == "lie" and lie_cache is not None:
        key = cond.target
        if key not in lie_cache:
            lie_cache[key] = ex.lie_derivative(functions[key], f_closed)
        q = lie_cache[key]
    else:
        q = candidate_quantity(cond, functions, f_closed)
    thr = resolve(cond.threshold, params)
    base = p.region(cond.base)
    pieces = base.boundary_pieces(p.delta) if cond.boundary else base.pieces()
    extra = [cs.negate(p.region(r).to_constraints()) for r in cond.exclude]
    extra += level_atoms(cond, functions, params)
    pieces = [(lb, ub, cs.conj(pred, *extra)) for lb, ub, pred in pieces]
    goal = cs.negate(holds_atom(cond, q, thr))
    return VerificationQuery(cond, pieces, goal, q, thr)


# ----------------------------------------------------------------------------
# sampling side


def region_samples(p: Problem, cond: Condition, n: int, rng: np.random.Generator, band: float) -> np.ndarray:
    base = p.region(cond.base)
    if cond.boundary:
        return sample_boundary(base, n, band, rng, source=cond.base).points
    return sample_interior(base, n, rng, source=cond.base).points


def static_mask(p: Problem, cond: Condition, P: np.ndarray) -> np.ndarray:
    """Part of the domain filter that does not depend on the candidates."""
    keep = np.ones(len(P), dtype=bool)
    for r in cond.exclude:
        keep &= ~p.region(r).contains(P)
    return keep


def violation(cond: Condition, q: np.ndarray, threshold: float) -> np.ndarray:
    """``v = p * (q - threshold)``; the condition fails where ``v > 0``
    (``v >= 0`` for strict relations)."""
    return cond.sign * (q - threshold)


def violated(cond: Condition, v: np.ndarray) -> np.ndarray:
    return v >= 0 if cond.strict else v > 0


# ----------------------------------------------------------------------------
# level sets


def estimate_roa_level(v: Callable[[np.ndarray], np.ndarray], x_init: Region, n_samples: int,
                       rng: np.random.Generator, margin: float = 0.05) -> float:
    """``(1 + margin) * max v`` over samples of the initial set.

    ``v`` maps an ``(N, n)`` array to ``N`` values (network or symbolic).
    """
    P = sample_interior(x_init, n_samples, rng).points
    vals = np.asarray(v(P), dtype=float).reshape(-1)
    top = float(np.max(vals))
    return top + margin * abs(top)


def beta_bounds(v: Callable[[np.ndarray], np.ndarray], final: Region, rng: np.random.Generator,
                n: int = 1000, band: float | None = None, margin: float = 1e-3) -> tuple[float, float] | None:
    """``(hi, lo)``: just below the smallest ``v`` seen on the inner edge of
    ``final``, and the smallest ``v`` seen inside it. ``None`` without edge samples."""
    band = band if band is not None else 0.01 * final.diameter
    Pb = sample_boundary(final, n, band, rng).points
    Pb = Pb[final.contains(Pb)]  # stay on the inside of the band
    Pi = sample_interior(final, n, rng).points
    vb = np.asarray(v(Pb), dtype=float).reshape(-1)
    vi = np.asarray(v(Pi), dtype=float).reshape(-1)
    if vb.size == 0:
        return None
    hi = float(vb.min())
    hi -= margin * max(1.0, abs(hi))
    return hi, float(vi.min())


def beta_grid(v: Callable[[np.ndarray], np.ndarray], final: Region, rng: np.random.Generator,
              n: int = 1000, band: float | None = None, count: int = 10, margin: float = 1e-3) -> list[float]:
    """Descending candidate levels for the reach-and-stay sublevel set.

    Starts just below the smallest value of ``v`` seen near the boundary of
    ``final`` and moves toward the smallest value seen inside ``final``.
    Only negative levels are returned.
    """
    bounds = beta_bounds(v, final, rng, n, band, margin)
    if bounds is None:
        return []
    hi, lo = bounds
    if lo >= hi:
        return []
    grid = [hi + (lo - hi) * k / count for k in range(count)]
    return [b for b in grid if b < 0]
