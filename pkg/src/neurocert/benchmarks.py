"""Registry of the 26 reference benchmarks.

Dynamics use the text grammar of :func:`neurocert.expr.parse` (``x0``, ``u0``,
``^`` for integer powers); regions use the shorthand of
:func:`neurocert.geometry.parse_region`. ``net`` is the shape of the first
certificate (V, or B for barrier problems), ``alt`` the shape of the barrier
in two-function certificates, ``ctrl`` the controller hidden layers.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

from . import expr as ex
from .certificate import Kind, Problem, ProblemError
from .cegis import CegisConfig
from .geometry import parse_region
from .network import NetSpec


_PROBLEM_KEYS = ("gamma", "epsilon", "delta", "roa_margin")

# reach-type certificates need a steep V near a small target set; the default
# leaky loss keeps rewarding margin on satisfied points and the scale runs away
REACH_HYPER = {"learn_rate": 0.1, "loss": "softplus"}


@dataclass(frozen=True)
class BenchmarkEntry:
    id: int
    name: str
    kind: Kind
    dynamics: tuple
    regions: dict
    net: NetSpec
    alt: NetSpec | None = None
    ctrl: NetSpec | None = None
    n_inputs: int = 0
    extended: bool = False
    hyper: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return f"{self.id}-{self.name}"

    def problem(self, **overrides) -> Problem:
        f = ex.VectorField.parse(list(self.dynamics), self.n_inputs)
        domain = parse_region(self.regions["domain"])
        regions = {"domain": domain}
        for k, text in self.regions.items():
            if k != "domain":
                regions[k] = parse_region(text, domain)
        kw = {k: v for k, v in self.hyper.items() if k in _PROBLEM_KEYS}
        kw.update({k: v for k, v in overrides.items() if v is not None})
        return Problem(self.kind, f, regions, name=self.label, **kw)

    def config(self, seed: int = 0, **overrides) -> CegisConfig:
        nets = {}
        first = "B" if self.kind == Kind.SAFETY else "V"
        nets[first] = self.net
        if self.alt is not None:
            nets["B"] = self.alt
        if self.ctrl is not None:
            nets["ctrl"] = self.ctrl
        cfg = CegisConfig(seed=seed, nets=nets)
        for k, v in {**self.hyper, **overrides}.items():
            if k in _PROBLEM_KEYS:
                continue
            if v is None:
                continue
            if hasattr(cfg.train, k) and not hasattr(cfg, k):
                cfg.train = dataclasses.replace(cfg.train, **{k: v})
            elif hasattr(cfg, k):
                setattr(cfg, k, v)
            else:
                raise ProblemError(f"unknown override {k!r}")
        return cfg

    def build(self, seed: int = 0, overrides: dict | None = None) -> tuple[Problem, CegisConfig]:
        overrides = dict(overrides or {})
        prob_keys = {k: overrides.pop(k) for k in list(overrides) if k in _PROBLEM_KEYS}
        return self.problem(**prob_keys), self.config(seed, **overrides)

    def listing(self) -> str:
        """One-record text listing; the golden registry test compares these."""
        lines = [f"[{self.id}] {self.name} {self.kind.value}", "f = [" + ", ".join(self.dynamics) + "]"]
        for k in ("domain", "init", "unsafe", "safe", "goal", "final"):
            if k in self.regions:
                lines.append(f"{k}: {self.regions[k]}")
        lines.append(f"net: {list(self.net.neurons)} {list(self.net.activations)}")
        if self.alt is not None:
            lines.append(f"alt: {list(self.alt.neurons)} {list(self.alt.activations)}")
        if self.ctrl is not None:
            lines.append(f"ctrl: {list(self.ctrl.neurons) + [self.n_inputs]} {list(self.ctrl.activations)}")
        if self.extended:
            lines.append("extended")
        return "\n".join(lines)


def _n(neurons, acts) -> NetSpec:
    return NetSpec(tuple(neurons), tuple(acts))


_LIN8 = _n([8], ["poly1"])

# second-order, third-order and pendulum models recur
_SO = ("-x0^3 + x1", "u0")
_SO_LQR = ("-x0^3 + x1", "-1.0*x0 - 1.73*x1")
_TO = ("u0 - 10*x0 + 10*x1", "-x0*x2 + 28*x0 - x1", "x0*x1 - 8/3*x2")
_TO_LQR = ("-33.71*x0 - 8.49*x1", "-x0*x2 + 28*x0 - x1", "x0*x1 - 8/3*x2")
_PEND = ("u0 + x1", "u1 - 8/3*x1 + 19.62*sin(x0)")

_SO_SETS = {
    "domain": "Rectangle([-1.5, -1.5], [1.5, 1.5])",
    "init": "Rectangle([-0.5, -0.5], [0.5, 0.5])",
    "safe": "Rectangle([-1, -1], [1, 1])",
}
_TO_SETS = {
    "domain": "Rectangle([-6, -6, -6], [6, 6, 6])",
    "init": "Rectangle([-1.2, -1.2, -1.2], [1.2, 1.2, 1.2])",
    "safe": "Rectangle([-5, -5, -5], [5, 5, 5])",
}
_PEND_SETS = {
    "domain": "Rectangle([-3, -3], [3, 3])",
    "init": "Rectangle([-0.6, -0.6], [0.6, 0.6])",
    "safe": "Rectangle([-2.5, -2.5], [2.5, 2.5])",
}
_RAR_SETS = {
    "domain": "Rectangle([-3.5, -3.5], [3.5, 3.5])",
    "init": "Rectangle([-2, -2], [2, 2])",
    "safe": "Rectangle([-3, -3], [3, 3])",
    "goal": "Rectangle([-0.1, -0.1], [0.1, 0.1])",
}

_ENTRIES = [
    BenchmarkEntry(1, "NonPoly0", Kind.STABILITY, ("x0*x1 - x0", "-x1"),
                   {"domain": "Torus([0, 0], 1, 0.01)"}, _n([6], ["poly2"])),
    BenchmarkEntry(2, "Poly1", Kind.STABILITY, ("-x0^3 - x0*x2^2", "-x0^2*x1 - x1", "3*x0^2*x2 - 4*x2"),
                   {"domain": "Torus([0.0, 0.0, 0.0], 10.0, 0.1)"}, _n([8], ["poly2"])),
    BenchmarkEntry(3, "Benchmark1", Kind.STABILITY, ("u0 + x0 + x1", "u1 - x0 - x1"),
                   {"domain": "Torus([0.0, 0.0], 10.0, 0.1)"}, _n([4], ["poly2"]),
                   ctrl=_n([15], ["poly1"]), n_inputs=2),
    BenchmarkEntry(4, "InvertedPendulum", Kind.STABILITY, _PEND,
                   {"domain": "Torus([0.0, 0.0], 1, 0.1)"}, _n([5], ["poly2"]),
                   ctrl=_n([25], ["poly1"]), n_inputs=2),
    BenchmarkEntry(5, "NonPoly1", Kind.ROA, ("2*x0^2*x1 - x0", "-x1"),
                   {"domain": "Rectangle([-2, -2], [2, 2])",
                    "init": "Sphere([-1, 1], 0.1) | Sphere([1, -1], 0.2)"}, _n([5], ["tanh2"])),
    BenchmarkEntry(6, "LorenzSystem", Kind.ROA,
                   ("u0 - 10.0*x0 + 10.0*x1", "u1 - x0*x2 + 28.0*x0 - x1", "u2 + x0*x1 - 8/3*x2"),
                   {"domain": "Rectangle([-1, -1, -1], [1, 1, 1])", "init": "Sphere([0, 0, 0], 0.3)"},
                   _n([8], ["poly2"]), ctrl=_n([8], ["poly1"]), n_inputs=3),
    BenchmarkEntry(7, "Barr2", Kind.SAFETY, ("x1 - 1 + exp(-x0)", "-sin(x0)^2"),
                   {"domain": "Rectangle([-2, -2], [2, 2])", "init": "Sphere([-0.5, 0.5], 0.4)",
                    "unsafe": "Sphere([0.7, -0.7], 0.3)"}, _n([15], ["tanh"])),
    BenchmarkEntry(8, "ObstacleAvoidance", Kind.SAFETY,
                   ("sin(x2)", "cos(x2)", "(3*x0*sin(x2) + 3*x1*cos(x2))/(x0^2 + x1^2 + 0.5) - sin(x2)"),
                   {"domain": "Rectangle([-2, -2, -1.57], [2, 2, 1.57])",
                    "init": "Rectangle([-0.1, -2, -0.52], [0.1, -1.8, 0.52])",
                    "unsafe": "Cylinder([0, 0], 0.2, [0, 1])"}, _n([25], ["poly4"]), extended=True),
    BenchmarkEntry(9, "HighOrd8", Kind.SAFETY,
                   ("x1", "x2", "x3", "x4", "x5", "x6", "x7",
                    "-576*x0 - 2400*x1 - 4180*x2 - 3980*x3 - 2273*x4 - 800*x5 - 170*x6 - 20*x7"),
                   {"domain": "Rectangle([" + ", ".join(["-2.2"] * 8) + "], [" + ", ".join(["2.2"] * 8) + "])",
                    "init": "Rectangle([" + ", ".join(["0.9"] * 8) + "], [" + ", ".join(["1.1"] * 8) + "])",
                    "unsafe": "Rectangle([" + ", ".join(["-2.2"] * 8) + "], [" + ", ".join(["-1.8"] * 8) + "])"},
                   _n([10], ["poly1"]), extended=True),
    BenchmarkEntry(10, "CtrlObstacleAvoidance", Kind.SAFETY, ("sin(x2)", "cos(x2)", "u0 - sin(x2)"),
                   {"domain": "Rectangle([-10.0, -10.0, -pi], [10.0, 10.0, pi])",
                    "init": "Rectangle([4.0, 4.0, -pi/2], [6.0, 6.0, pi/2])",
                    "unsafe": "Rectangle([-9, -9, -pi/2], [-7.0, -6.0, pi/2])"},
                   _n([15], ["tanh"]), ctrl=_n([5], ["tanh"]), n_inputs=1),
    BenchmarkEntry(11, "NonPoly3", Kind.SWA, ("-0.1*x0*x1^3 - 3*x0", "-x1 + x2", "-x2"),
                   {"domain": "Torus([0, 0, 0], 3, 0.01)", "init": "Sphere([-0.9, -0.9, -0.9], 1.0)",
                    "unsafe": "Sphere([0.4, 0.4, 0.4], 0.2) | Sphere([-0.4, 0.4, 0.4], 0.2)"},
                   _n([6], ["poly2"]), alt=_n([5], ["tanh"])),
    BenchmarkEntry(12, "Barr3", Kind.SWA, ("x1", "1/3*x0^3 - x0 - x1"),
                   {"domain": "Rectangle([-3, -2], [2.5, 1])", "init": "Rectangle([0.4, 0.1], [0.8, 0.5])",
                    "unsafe": "Sphere([-1, -1], 0.4)"},
                   _n([5], ["poly2"]), alt=_n([5, 5], ["sigmoid", "poly2"])),
    BenchmarkEntry(13, "SecondOrder", Kind.SWA, _SO,
                   {"domain": "Rectangle([-1.5, -1.5], [1.5, 1.5])", "init": "Rectangle([-0.5, -0.5], [0.5, 0.5])",
                    "unsafe": "Complement(Rectangle([-1, -1], [1, 1]))"},
                   _n([8], ["poly2"]), alt=_n([5], ["poly2"]), ctrl=_LIN8, n_inputs=1),
    BenchmarkEntry(14, "ThirdOrder", Kind.SWA, _TO,
                   {"domain": "Rectangle([-6, -6, -6], [6, 6, 6])", "init": "Rectangle([-1.2, -1.2, -1.2], [1.2, 1.2, 1.2])",
                    "unsafe": "Complement(Rectangle([-5, -5, -5], [5, 5, 5]))"},
                   _n([10], ["poly2"]), alt=_n([8], ["tanh"]), ctrl=_LIN8, n_inputs=1),
    BenchmarkEntry(15, "SecondOrderLQR", Kind.RWA, _SO_LQR,
                   {**_SO_SETS, "goal": "Rectangle([-0.05, -0.05], [0.05, 0.05])"}, _n([4], ["poly2"])),
    BenchmarkEntry(16, "ThirdOrderLQR", Kind.RWA, _TO_LQR,
                   {**_TO_SETS, "goal": "Rectangle([-0.3, -0.3, -0.3], [0.3, 0.3, 0.3])"}, _n([16], ["poly2"])),
    BenchmarkEntry(17, "SecondOrder", Kind.RWA, _SO,
                   {"domain": "Rectangle([-1.5, -1.5], [1.5, 1.5])", "init": "Rectangle([-0.5, -0.5], [-0.1, -0.1])",
                    "safe": "Rectangle([-1.5, -1.5], [1.5, 1.5]) \\ Sphere([0.5, 0.5], 0.2)",
                    "goal": "Rectangle([-0.05, -0.05], [0.05, 0.05])"},
                   _n([4, 4], ["sigmoid", "poly2"]), ctrl=_LIN8, n_inputs=1),
    BenchmarkEntry(18, "ThirdOrder", Kind.RWA, _TO,
                   {**_TO_SETS, "goal": "Rectangle([-0.3, -0.3, -0.3], [0.3, 0.3, 0.3])"},
                   _n([5], ["poly2"]), ctrl=_LIN8, n_inputs=1),
    BenchmarkEntry(19, "InvertedPendulum", Kind.RWA, _PEND,
                   {**_PEND_SETS, "goal": "Rectangle([-0.01, -0.01], [0.01, 0.01])"},
                   _n([5], ["sigmoid"]), ctrl=_LIN8, n_inputs=2),
    BenchmarkEntry(20, "SecondOrderLQR", Kind.RSWA, _SO_LQR,
                   {**_SO_SETS, "final": "Rectangle([-0.05, -0.05], [0.05, 0.05])"}, _n([4], ["poly2"])),
    BenchmarkEntry(21, "ThirdOrderLQR", Kind.RSWA, _TO_LQR,
                   {**_TO_SETS, "final": "Rectangle([-0.3, -0.3, -0.3], [0.3, 0.3, 0.3])"}, _n([16], ["poly2"])),
    BenchmarkEntry(22, "InvertedPendulumLQR", Kind.RSWA,
                   ("-7.21*x0 - 0.34*x1", "-1.34*x0 - 2.997*x1 + 19.62*sin(x0)"),
                   {**_PEND_SETS, "final": "Rectangle([-0.3, -0.3], [0.3, 0.3])"},
                   _n([5, 5], ["sigmoid", "poly2"])),
    BenchmarkEntry(23, "SecondOrder", Kind.RSWA, _SO,
                   {**_SO_SETS, "final": "Rectangle([-0.05, -0.05], [0.05, 0.05])"},
                   _n([8], ["poly2"]), ctrl=_LIN8, n_inputs=1),
    BenchmarkEntry(24, "InvertedPendulum", Kind.RSWA, _PEND,
                   {**_PEND_SETS, "final": "Rectangle([-0.3, -0.3], [0.3, 0.3])"},
                   _n([5, 5], ["sigmoid", "poly2"]), ctrl=_LIN8, n_inputs=2),
    BenchmarkEntry(25, "SecondOrderLQR", Kind.RAR, _SO_LQR,
                   {**_RAR_SETS, "final": "Rectangle([-0.15, -0.15], [0.15, 0.15])"},
                   _n([6], ["softplus"]), alt=_n([6], ["poly2"])),
    BenchmarkEntry(26, "InvertedPendulum", Kind.RAR, _PEND,
                   {**_RAR_SETS, "final": "Rectangle([-0.2, -0.2], [0.2, 0.2])"},
                   _n([6, 6], ["sigmoid", "poly2"]), alt=_n([6, 6], ["sigmoid", "poly2"]),
                   ctrl=_LIN8, n_inputs=2),
]

_ENTRIES = [
    dataclasses.replace(e, hyper={**REACH_HYPER, **e.hyper}) if e.kind in (Kind.RWA, Kind.RSWA, Kind.RAR) else e
    for e in _ENTRIES
]

REGISTRY: dict[int, BenchmarkEntry] = {e.id: e for e in _ENTRIES}

# control RWA / RSWA benchmarks used by the control-loss ablation
CONTROL_REACH = (17, 18, 19, 23, 24)


def get(key) -> BenchmarkEntry:
    """Look up by id (int or numeric string) or by ``label``/unique name."""
    if isinstance(key, BenchmarkEntry):
        return key
    text = str(key).strip()
    if text.isdigit() and int(text) in REGISTRY:
        return REGISTRY[int(text)]
    hits = [e for e in _ENTRIES if text in (e.label, e.name)]
    if len(hits) == 1:
        return hits[0]
    listing = ", ".join(e.label for e in _ENTRIES)
    raise ProblemError(f"unknown benchmark {key!r}; registry: {listing}")


def default_suite() -> list[BenchmarkEntry]:
    return [e for e in _ENTRIES if not e.extended]


def registry_listing() -> str:
    return "\n\n".join(e.listing() for e in _ENTRIES) + "\n"
