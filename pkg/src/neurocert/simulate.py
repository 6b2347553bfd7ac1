"""Trajectory integration and empirical property checks.

This is the numerical oracle used to cross-check verified certificates: it
never looks at the certificate conditions, only at where trajectories go.
A finite horizon can only under-report violations of the unbounded-time
properties, never invent them.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expr as ex
from .certificate import Kind, Problem
from .geometry import Region, sample_boundary, sample_interior

BLOW_UP = 1e6


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (steps + 1, n)
    dt: float
    T: float
    blew_up: bool = False


def _as_function(f) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(f, ex.VectorField):
        if f.dim_input:
            raise ValueError("close the loop before integrating (dynamics still have inputs)")
        return ex.compile_numpy(f.components)
    return f


def _rk4_step(g, X, dt):
    k1 = g(X)
    k2 = g(X + 0.5 * dt * k1)
    k3 = g(X + 0.5 * dt * k2)
    k4 = g(X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


def _steps(dt: float, T: float) -> int:
    if not dt > 0:
        raise ValueError("dt must be positive")
    if T < dt:
        raise ValueError("horizon T must be at least dt")
    return int(round(T / dt))


def integrate(f, x0, dt: float = 1e-3, T: float = 10.0) -> Trajectory:
    """Classical fixed-step RK4 from ``x0``; stops early on blow-up."""
    g = _as_function(f)
    n_steps = _steps(dt, T)
    x = np.asarray(x0, dtype=float).reshape(1, -1)
    states = np.empty((n_steps + 1, x.shape[1]))
    states[0] = x[0]
    blew = False
    k = 0
    with np.errstate(all="ignore"):
        for k in range(1, n_steps + 1):
            x = _rk4_step(g, x, dt)
            if not np.all(np.isfinite(x)) or np.linalg.norm(x) > BLOW_UP:
                blew = True
                k -= 1
                break
            states[k] = x[0]
    states = states[: k + 1]
    return Trajectory(dt * np.arange(len(states)), states, dt, T, blew)


def integrate_batch(f, X0, dt: float, T: float, observe=None) -> tuple[np.ndarray, np.ndarray]:
    """Integrate many initial states together.

    ``observe(step, X, alive)`` is called after every step (and with step 0
    on the initial states); returning True stops the integration early.
    Returns final states and the blow-up mask; blown-up rows are frozen.
    """
    g = _as_function(f)
    n_steps = _steps(dt, T)
    X = np.array(X0, dtype=float, copy=True)
    alive = np.ones(len(X), dtype=bool)
    if observe is not None and observe(0, X, alive):
        return X, ~alive
    with np.errstate(all="ignore"):
        for k in range(1, n_steps + 1):
            Y = _rk4_step(g, X[alive], dt)
            ok = np.all(np.isfinite(Y), axis=1) & (np.linalg.norm(Y, axis=1) <= BLOW_UP)
            idx = np.flatnonzero(alive)
            X[idx[ok]] = Y[ok]
            alive[idx[~ok]] = False
            if observe is not None and observe(k, X, alive):
                break
    return X, ~alive


# ----------------------------------------------------------------------------
# property checks


@dataclass
class EmpiricalVerdict:
    kind: str
    n_trajectories: int
    n_avoid_violations: int = 0
    n_arrive_successes: int = 0
    n_remain_violations: int = 0
    n_blow_ups: int = 0
    checks_arrive: bool = True
    checks_remain: bool = False
    witnesses: dict = field(default_factory=dict)  # component -> first offending initial state
    max_barrier: float = -np.inf  # max B along runs started in {B <= 0}
    n_lyapunov_increases: int = 0

    @property
    def clean(self) -> bool:
        arrive_ok = (not self.checks_arrive) or self.n_arrive_successes == self.n_trajectories
        return self.n_avoid_violations == 0 and self.n_remain_violations == 0 and arrive_ok

    def summary(self) -> str:
        parts = [f"{self.kind}: {self.n_trajectories} runs", f"avoid violations {self.n_avoid_violations}"]
        if self.checks_arrive:
            parts.append(f"arrived {self.n_arrive_successes}")
        if self.checks_remain:
            parts.append(f"remain violations {self.n_remain_violations}")
        if self.n_blow_ups:
            parts.append(f"blow-ups {self.n_blow_ups}")
        return ", ".join(parts)


def _sublevel_start(p: Problem, v, n: int, rng: np.random.Generator) -> np.ndarray:
    """Initial states for plain stability: the part of the domain below the
    smallest value ``v`` takes on the domain's outer boundary."""
    dom = p.regions["domain"]
    if v is None:
        return sample_interior(dom, n, rng).points
    band = 1e-3 * dom.diameter
    edge = sample_boundary(dom, 4000, band, rng).points
    r = np.linalg.norm(edge, axis=1)
    hole = r.min() + 2 * band if not dom.contains(np.zeros((1, p.dim)))[0] else 0.0
    edge = edge[r > max(2 * p.epsilon, 2 * hole)]  # drop the excluded hole around the origin
    level = float(np.min(v(edge)))
    out, tries = [], 0
    while sum(len(o) for o in out) < n and tries < 200:
        P = sample_interior(dom, 4 * n, rng).points
        out.append(P[v(P) < level])
        tries += 1
    P = np.vstack(out)
    if len(P) < n:
        raise ValueError("could not sample the certified sublevel set")
    return P[:n]


def _fn(e):
    if e is None:
        return None
    if callable(e) and not isinstance(e, ex.Expr):
        return e
    g = ex.compile_numpy([e])
    return lambda X: g(np.atleast_2d(X))[:, 0]


def check_property(p: Problem, f_closed, n_init: int = 100, dt: float = 1e-3, T: float = 50.0,
                   rng: np.random.Generator | None = None, certificates: dict | None = None,
                   params: dict | None = None, X0: np.ndarray | None = None,
                   monitor_every: int = 10) -> EmpiricalVerdict:
    """Simulate ``n_init`` runs and count avoid / arrive / remain outcomes.

    * avoid: no state in the unsafe set (reach kinds: no state outside the
      safe set before the first arrival);
    * arrive: stability kinds enter the ball of radius ``5 * epsilon``;
      RWA/RAR enter the goal; RSWA enter the level set ``{V <= beta}`` inside
      the final set (the final set itself without a certificate);
    * remain: RAR stays in the final set after the first goal entry; RSWA
      does not leave the final set after its last entry into the level set.

    ``certificates`` (``"V"``/``"B"`` expressions or callables) enable the
    level-set trigger and the barrier / Lyapunov monitors.
    """
    if n_init < 1:
        raise ValueError("n_init must be at least 1")
    rng = rng or np.random.default_rng(0)
    certificates = certificates or {}
    params = params or {}
    V = _fn(certificates.get("V"))
    B = _fn(certificates.get("B"))
    k = p.kind
    R = p.regions
    if X0 is None:
        if k == Kind.STABILITY:
            X0 = _sublevel_start(p, V, n_init, rng)
        else:
            X0 = sample_interior(R["init"], n_init, rng).points
    X0 = np.asarray(X0, dtype=float)
    N = len(X0)
    ball = 5.0 * p.epsilon
    verdict = EmpiricalVerdict(k.value, N)
    verdict.checks_arrive = k != Kind.SAFETY
    verdict.checks_remain = k in (Kind.RSWA, Kind.RAR)

    unsafe: Region | None = R.get("unsafe") if k in (Kind.SAFETY, Kind.SWA) else None
    safe: Region | None = R.get("safe") if k in (Kind.RWA, Kind.RSWA, Kind.RAR) else None
    final: Region | None = R.get("final")
    beta = params.get("beta")

    def target(X):
        if k == Kind.SAFETY:
            return np.zeros(len(X), dtype=bool)
        if k in (Kind.STABILITY, Kind.ROA, Kind.SWA):
            return np.linalg.norm(X, axis=1) <= ball
        if k in (Kind.RWA, Kind.RAR):
            return R["goal"].contains(X)
        inside = final.contains(X)
        if V is not None and beta is not None:
            inside &= V(X) <= beta
        return inside

    arrived = np.zeros(N, dtype=bool)
    avoid_bad = np.zeros(N, dtype=bool)
    remain_bad = np.zeros(N, dtype=bool)
    was_in = np.zeros(N, dtype=bool)
    barrier_track = None
    if B is not None and k in (Kind.SAFETY, Kind.SWA):
        barrier_track = B(X0) <= 0
    lyap_prev = V(X0) if (V is not None and k in (Kind.STABILITY, Kind.ROA, Kind.SWA)) else None
    lyap_bad = np.zeros(N, dtype=bool)
    stop_when_arrived = k in (Kind.STABILITY, Kind.ROA, Kind.RWA)

    def observe(step, X, alive):
        nonlocal lyap_prev
        hit = target(X)
        if k == Kind.RSWA:
            # the remain clock restarts at every fresh entry into the level set
            fresh = hit & ~was_in
            remain_bad[fresh] = False
            out_f = ~final.contains(X)
            remain_bad[arrived & out_f] = True
            was_in[:] = hit
        elif k == Kind.RAR:
            remain_bad[arrived & ~final.contains(X)] = True
        if unsafe is not None:
            avoid_bad[unsafe.contains(X)] = True
        if safe is not None:
            avoid_bad[~arrived & ~hit & ~safe.contains(X)] = True
        arrived[hit] = True
        if step % monitor_every == 0:
            if barrier_track is not None and barrier_track.any():
                verdict.max_barrier = max(verdict.max_barrier, float(np.max(B(X[barrier_track]))))
            if lyap_prev is not None:
                cur = V(X)
                outside = np.linalg.norm(X, axis=1) > p.epsilon
                lyap_bad[outside & (cur > lyap_prev + 1e-6 * monitor_every)] = True
                lyap_prev = cur
        return stop_when_arrived and bool(np.all(arrived | ~alive))

    _, blew = integrate_batch(f_closed, X0, dt, T, observe)
    verdict.n_blow_ups = int(blew.sum())
    if verdict.checks_remain:
        remain_bad |= arrived & blew
    verdict.n_arrive_successes = int(arrived.sum())
    verdict.n_avoid_violations = int(avoid_bad.sum())
    verdict.n_remain_violations = int(remain_bad.sum())
    verdict.n_lyapunov_increases = int(lyap_bad.sum())
    for name, mask in (("avoid", avoid_bad), ("arrive", ~arrived if verdict.checks_arrive else None),
                       ("remain", remain_bad)):
        if mask is not None and mask.any():
            verdict.witnesses[name] = X0[np.flatnonzero(mask)[0]]
    return verdict


# ----------------------------------------------------------------------------
# CSV export


def write_trajectory_csv(traj: Trajectory, path) -> None:
    n = traj.states.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{i}" for i in range(n)])
        for t, x in zip(traj.times, traj.states):
            w.writerow([f"{t:.6g}"] + [repr(float(v)) for v in x])


def contour_grid(fn, lb, ub, axes=(0, 1), fixed=None, n: int = 101):
    """Values of ``fn`` on an ``n x n`` grid over two coordinates of a box;
    other coordinates are held at ``fixed`` (default: the box centre)."""
    lb, ub = np.asarray(lb, float), np.asarray(ub, float)
    base = (lb + ub) / 2 if fixed is None else np.asarray(fixed, float)
    a, b = axes
    ga = np.linspace(lb[a], ub[a], n)
    gb = np.linspace(lb[b], ub[b], n)
    A, Bm = np.meshgrid(ga, gb, indexing="ij")
    P = np.tile(base, (n * n, 1))
    P[:, a] = A.ravel()
    P[:, b] = Bm.ravel()
    vals = _fn(fn)(P)
    return P[:, a], P[:, b], np.asarray(vals, float)


def write_contour_csv(fn, lb, ub, path, axes=(0, 1), fixed=None, n: int = 101) -> None:
    xa, xb, vals = contour_grid(fn, lb, ub, axes, fixed, n)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow([f"x{axes[0]}", f"x{axes[1]}", "value"])
        for r in zip(xa, xb, vals):
            w.writerow([repr(float(v)) for v in r])
