"""Turn one counterexample into a cloud of training points.

Two sources: a Gaussian cloud around the witness, and a short run of
normalised gradient ascent on the violation ``v(x) = p * (q(x) - threshold)``
(steps that would lower ``v`` are rejected, so the accepted sequence is
monotone). Every returned point satisfies the condition's domain predicate,
level-set restrictions included, evaluated on the current candidates.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch

from . import certificate as cert
from .certificate import Condition, Problem
from .network import Network, eval_field_torch


@dataclass
class ConsolidatorConfig:
    n_cloud: int = 100
    r_cloud: float | None = None  # default: 5% of the domain diameter
    r_fraction: float = 0.05
    n_ascent: int = 20
    step: float | None = None  # default: r_cloud / 10


@dataclass
class CexBundle:
    origin: np.ndarray
    condition: str
    cloud: np.ndarray
    ascent: list = field(default_factory=list)  # violation values of accepted ascent iterates


def _quantity(cond: Condition, nets: dict, f, X: np.ndarray, with_grad: bool):
    """``q`` (value or Lie derivative) at ``X``; with ``with_grad`` also d q / d x."""
    net: Network = nets[cond.target]
    Xt = torch.as_tensor(np.atleast_2d(X), dtype=torch.float64).clone().requires_grad_(True)
    c = net.forward_t(Xt)[:, 0]
    if cond.quantity == "value":
        q = c
    else:
        (g,) = torch.autograd.grad(c.sum(), Xt, create_graph=with_grad)
        q = (g * eval_field_torch(f, Xt, nets.get("ctrl"))).sum(dim=1)
    if not with_grad:
        return q.detach().numpy(), None
    (dq,) = torch.autograd.grad(q.sum(), Xt)
    return q.detach().numpy(), dq.numpy()


def domain_mask(p: Problem, cond: Condition, nets: dict, params: dict, X: np.ndarray, band: float | None = None) -> np.ndarray:
    """Exact domain membership on the current candidates (boundary domains use
    a band of width ``band`` around the boundary)."""
    X = np.atleast_2d(X)
    base = p.region(cond.base)
    if cond.boundary:
        width = band if band is not None else 0.05 * base.diameter
        dist = _boundary_distance(base, X)
        keep = dist <= width
    else:
        keep = base.contains(X)
    keep &= cert.static_mask(p, cond, X)
    if cond.levels:
        with torch.no_grad():
            for lv in cond.levels:
                v = nets[lv.target].forward(X)[:, 0]
                thr = cert.resolve(lv.value, params)
                if lv.op == "band":
                    keep &= np.abs(v) <= thr
                elif lv.op == "<=":
                    keep &= v <= thr
                else:
                    keep &= v >= thr
    return keep


def _boundary_distance(r, X):
    if hasattr(r, "boundary_distance"):
        return r.boundary_distance(X)
    # composite boundary: fall back to the sampler's notion (near any component face)
    from .geometry import _composite_boundary_mask

    parts = getattr(r, "parts", None) or [getattr(r, "a"), getattr(r, "b")]
    d = np.min([_boundary_distance(q, X) for q in parts], axis=0)
    return np.where(_composite_boundary_mask(r, X), d, np.inf)


def consolidate(cex: np.ndarray, cond: Condition, p: Problem, nets: dict, params: dict,
                rng: np.random.Generator, cfg: ConsolidatorConfig | None = None, band: float | None = None) -> CexBundle:
    cfg = cfg or ConsolidatorConfig()
    cex = np.asarray(cex, dtype=float).reshape(-1)
    lb, ub = p.region("domain").bounding_box()
    if cond.base != "domain":
        blb, bub = p.region(cond.base).bounding_box()
        lb, ub = np.minimum(lb, blb), np.maximum(ub, bub)
    r = cfg.r_cloud if cfg.r_cloud is not None else cfg.r_fraction * p.region("domain").diameter
    eta = cfg.step if cfg.step is not None else r / 10.0
    thr = cert.resolve(cond.threshold, params)

    cloud = cex + r * rng.standard_normal((cfg.n_cloud, cex.size))
    cloud = np.clip(cloud, lb, ub)

    # gradient ascent on the violation
    path = []
    x = cex.copy()
    q, dq = _quantity(cond, nets, p.dynamics, x, True)
    v = cond.sign * (q[0] - thr)
    values = [float(v)]
    for _ in range(cfg.n_ascent):
        g = cond.sign * dq[0]
        n = np.linalg.norm(g)
        if not np.isfinite(n) or n == 0:
            break
        y = np.clip(x + eta * g / n, lb, ub)
        qy, dqy = _quantity(cond, nets, p.dynamics, y, True)
        vy = cond.sign * (qy[0] - thr)
        if not vy >= v:
            break  # reject a step that lowers the violation
        x, v, dq = y, vy, dqy
        path.append(x.copy())
        values.append(float(v))
    pts = np.vstack([cex[None, :], cloud] + ([np.array(path)] if path else []))
    keep = domain_mask(p, cond, nets, params, pts, band)
    keep[0] = True  # the witness itself is always kept
    return CexBundle(cex, cond.name, pts[keep], values)
