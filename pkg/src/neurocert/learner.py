"""Gradient-based training of certificate (and controller) networks.

Each condition contributes ``mean m(p * (q(d) - threshold))`` over its
samples, where ``q`` is the candidate value or its Lie derivative along the
closed loop. Level-set domains ({V <= 0}, {|B| <= eps}, ...) are re-filtered
against the current candidates every epoch. Controlled problems may add the
cosine-similarity term that pulls ``f(d)`` toward ``-d``.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np
import torch

from . import certificate as cert
from .certificate import Condition, Kind, Problem
from .geometry import sample_interior
from .network import Network, eval_field_torch

log = logging.getLogger(__name__)

MIN_BAND_POINTS = 50


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    learn_rate: float = 0.01
    max_epochs: int = 1000
    loss: str = "leaky"  # "leaky" or "softplus"
    leaky_slope: float = 0.01
    band_epsilon: float = 0.05
    control_loss_weight: float | None = None  # None: 1.0 for controlled RWA/RSWA/RAR, else 0
    n_samples: int = 1000
    band_fraction: float = 0.05
    patience: int = 10
    roa_samples: int = 500
    verbose: bool = False

    def __post_init__(self):
        if self.learn_rate < 0:
            raise ValueError("learn_rate must be non-negative")
        if self.loss not in ("leaky", "softplus"):
            raise ValueError("loss must be 'leaky' or 'softplus'")
        if self.band_epsilon <= 0 or self.n_samples < 1 or self.max_epochs < 0:
            raise ValueError("band_epsilon, n_samples must be positive")


def default_control_weight(p: Problem) -> float:
    return 1.0 if p.has_controller and p.kind in (Kind.RWA, Kind.RSWA, Kind.RAR) else 0.0


def m_fn(cfg: TrainConfig):
    if cfg.loss == "leaky":
        return lambda z: torch.nn.functional.leaky_relu(z, cfg.leaky_slope)
    return torch.nn.functional.softplus


# ----------------------------------------------------------------------------
# data


class Dataset:
    """Per-condition sample sets; counterexamples are appended, never removed."""

    def __init__(self, p: Problem, conditions: list[Condition], cfg: TrainConfig, rng: np.random.Generator):
        self.problem = p
        self.conditions = [c for c in conditions if not c.verify_only]
        self.points: dict[str, np.ndarray] = {}
        self.extra: dict[str, np.ndarray] = {}
        self._mask: dict[str, np.ndarray] = {}
        shared: dict[tuple, np.ndarray] = {}
        for c in self.conditions:
            key = (c.base, c.boundary)
            if key not in shared:
                base = p.region(c.base)
                band = cfg.band_fraction * base.diameter
                shared[key] = cert.region_samples(p, c, cfg.n_samples, rng, band)
            # level-dependent conditions start empty and only learn from witnesses
            self.points[c.name] = np.zeros((0, p.dim)) if c.beta_dependent else shared[key].copy()
            if c.name == "V_final_boundary":
                self.edge = shared[key]
            if any(lv.op == "band" for lv in c.levels):
                self.extra[c.name] = sample_interior(p.region(c.base), 3 * cfg.n_samples, rng).points
        self.domain = sample_interior(p.regions["domain"], cfg.n_samples, rng).points
        self.init = None
        if not hasattr(self, "edge"):
            self.edge = None
        if "init" in p.regions:
            self.init = sample_interior(p.regions["init"], cfg.roa_samples, rng).points
        for c in self.conditions:
            self._refresh(c)

    def _refresh(self, c: Condition):
        self._mask[c.name] = cert.static_mask(self.problem, c, self.points[c.name])

    def add(self, name: str, P: np.ndarray) -> int:
        if name not in self.points or len(P) == 0:
            return 0
        self.points[name] = np.vstack([self.points[name], np.asarray(P, float)])
        self._refresh(next(c for c in self.conditions if c.name == name))
        return len(P)

    def active(self, c: Condition) -> np.ndarray:
        return self.points[c.name][self._mask[c.name]]

    def total(self) -> int:
        return sum(len(v) for v in self.points.values())


# ----------------------------------------------------------------------------
# losses


def condition_loss(cond: Condition, q: torch.Tensor, threshold: float, cfg: TrainConfig):
    """Mean of ``m(p * (q - threshold))`` and the number of violating points."""
    if q.numel() == 0:
        return q.new_zeros(()), 0, True
    v = cond.sign * (q - threshold)
    loss = m_fn(cfg)(v).mean()
    bad = (v >= 0) if cond.strict else (v > 0)
    return loss, int(bad.sum()), False


def control_loss(X: torch.Tensor, fx: torch.Tensor, eps: float = 1e-6):
    """Mean cosine similarity between ``d`` and ``f(d)``; points near 0 are dropped."""
    nd = torch.linalg.norm(X, dim=1)
    keep = nd >= eps
    if not bool(keep.any()):
        return X.new_zeros(()), True
    X, fx, nd = X[keep], fx[keep], nd[keep]
    nf = torch.linalg.norm(fx, dim=1).clamp_min(1e-12)
    return ((X * fx).sum(dim=1) / (nd * nf)).mean(), False


def _value_and_lie(net: Network, X: np.ndarray, f, controller, need_lie: bool):
    Xt = torch.as_tensor(X, dtype=torch.float64)
    if not need_lie:
        return net.forward_t(Xt)[:, 0], None
    Xt = Xt.clone().requires_grad_(True)
    c = net.forward_t(Xt)[:, 0]
    (g,) = torch.autograd.grad(c.sum(), Xt, create_graph=True)
    fx = eval_field_torch(f, Xt, controller)
    return c, (g * fx).sum(dim=1)


@dataclass
class TrainReport:
    epochs: int = 0
    loss: float = float("nan")
    losses: dict = field(default_factory=dict)
    violations: dict = field(default_factory=dict)
    control_loss: float = 0.0
    empty: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        if not self.trace:
            return ""
        w = csv.DictWriter(buf, fieldnames=list(self.trace[0].keys()))
        w.writeheader()
        w.writerows(self.trace)
        return buf.getvalue()


def training_params(p: Problem, nets: dict, data: Dataset, cfg: TrainConfig) -> dict:
    """Values of the symbolic thresholds used while training."""
    params = {"band": cfg.band_epsilon}
    with torch.no_grad():
        if "V" in nets and any(lv.value == "roa" for c in data.conditions for lv in c.levels):
            v = nets["V"].forward(data.init)[:, 0]
            top = float(v.max())
            params["roa"] = top + p.roa_margin * abs(top)
        if p.kind == Kind.RSWA:
            P = data.edge
            inside = P[p.regions["final"].contains(P)]
            v = nets["V"].forward(inside if len(inside) else P)[:, 0]
            lo = float(v.min())
            params["beta"] = lo - 1e-3 * max(1.0, abs(lo))
    return params


def total_loss(p: Problem, nets: dict, data: Dataset, cfg: TrainConfig, f_weight: float):
    controller = nets.get("ctrl")
    f = p.dynamics
    params = training_params(p, nets, data, cfg)
    total = torch.zeros((), dtype=torch.float64)
    losses, counts, empty = {}, {}, []
    for c in data.conditions:
        X = data.active(c)
        need_lie = c.quantity == "lie"
        band = [lv for lv in c.levels if lv.op == "band"]
        if band and c.name in data.extra:
            with torch.no_grad():
                bv = nets[c.target].forward(X)[:, 0] if len(X) else np.zeros(0)
            if np.sum(np.abs(bv) <= cfg.band_epsilon) < MIN_BAND_POINTS:
                X = np.vstack([X, data.extra[c.name]])
        vals = {}
        for t in {c.target, *(lv.target for lv in c.levels)}:
            cv, lv_ = _value_and_lie(nets[t], X, f, controller, need_lie and t == c.target)
            vals[t] = (cv, lv_)
        mask = torch.ones(len(X), dtype=torch.bool)
        for lv in c.levels:
            thr = cert.resolve(lv.value, params)
            cv = vals[lv.target][0].detach()
            if lv.op == "band":
                mask &= cv.abs() <= thr
            elif lv.op == "<=":
                mask &= cv <= thr
            else:
                mask &= cv >= thr
        cv, lie = vals[c.target]
        q = (lie if need_lie else cv)[mask]
        thr = cert.resolve(c.threshold, params)
        loss, bad, was_empty = condition_loss(c, q, thr, cfg)
        if was_empty:
            empty.append(c.name)
        if not torch.isfinite(loss):
            raise TrainingError(f"non-finite loss in condition {c.name!r}")
        losses[c.name] = loss.item()
        counts[c.name] = bad
        total = total + loss
    lu = 0.0
    if f_weight > 0 and controller is not None:
        Xt = torch.as_tensor(data.domain, dtype=torch.float64)
        fx = eval_field_torch(f, Xt, controller)
        lu_t, was_empty = control_loss(Xt, fx)
        if was_empty:
            empty.append("control")
        if not torch.isfinite(lu_t):
            raise TrainingError("non-finite control loss")
        lu = lu_t.item()
        total = total + f_weight * lu_t
    return total, losses, counts, lu, empty


def train_iteration(p: Problem, nets: dict, data: Dataset, cfg: TrainConfig, optimizer=None) -> TrainReport:
    """Full-batch Adam steps until every condition is empirically satisfied for
    ``cfg.patience`` consecutive epochs, or ``cfg.max_epochs`` is reached."""
    params = [t for n in nets.values() if n is not None for t in n.parameters()]
    opt = optimizer or torch.optim.Adam(params, lr=cfg.learn_rate, betas=(0.9, 0.999))
    weight = cfg.control_loss_weight if cfg.control_loss_weight is not None else default_control_weight(p)
    report = TrainReport()
    clean = 0
    for epoch in range(cfg.max_epochs):
        opt.zero_grad()
        total, losses, counts, lu, empty = total_loss(p, nets, data, cfg, weight)
        if not torch.isfinite(total):
            raise TrainingError("non-finite total loss")
        report.epochs = epoch + 1
        report.loss = total.item()
        report.losses, report.violations, report.control_loss, report.empty = losses, counts, lu, empty
        if cfg.verbose:
            row = {"epoch": epoch, "loss": report.loss, "control": lu}
            row.update({f"loss_{k}": v for k, v in losses.items()})
            row.update({f"viol_{k}": v for k, v in counts.items()})
            report.trace.append(row)
        clean = clean + 1 if all(v == 0 for v in counts.values()) else 0
        if clean >= cfg.patience:
            break
        if total.requires_grad:
            total.backward()
            opt.step()
    return report
