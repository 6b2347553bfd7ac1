"""The learn / translate / verify / consolidate loop."""

from __future__ import annotations

import csv
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import torch

from . import certificate as cert
from . import expr as ex
from .certificate import Kind, Problem, build_conditions
from .consolidator import ConsolidatorConfig, consolidate
from .geometry import SamplingError
from .learner import Dataset, TrainConfig, TrainingError, train_iteration
from .network import NetSpec, Network, close_loop
from .verifier import Counterexample, DeltaSat, ResourceOut, VerifierConfig, build_query, check, query_from

log = logging.getLogger(__name__)

DEFAULT_CONTROLLER = NetSpec((8,), ("poly1",))


@dataclass
class CegisConfig:
    max_loops: int | None = None  # default 25, or 100 for two-function certificates
    seed: int = 0
    precision: float = 1e-3
    nets: dict = field(default_factory=dict)  # "V" / "B" / "ctrl" -> NetSpec
    train: TrainConfig = field(default_factory=TrainConfig)
    verifier: VerifierConfig | None = None
    consolidator: ConsolidatorConfig = field(default_factory=ConsolidatorConfig)
    short_circuit: bool = False
    beta_candidates: int = 10
    time_budget: float | None = None

    def loops_for(self, p: Problem) -> int:
        if self.max_loops is not None:
            if self.max_loops < 1:
                raise ValueError("max_loops must be at least 1")
            return self.max_loops
        return 100 if p.kind in (Kind.SWA, Kind.RAR) else 25


@dataclass
class SynthesisResult:
    success: bool
    reason: str = ""
    loops: int = 0
    certificates: dict = field(default_factory=dict)  # name -> rounded Expr
    controller: list | None = None
    params: dict = field(default_factory=dict)  # "roa" / "beta" levels that were verified
    t_learn: float = 0.0
    t_verify: float = 0.0
    t_total: float = 0.0
    cex_count: int = 0
    networks: dict = field(default_factory=dict)
    last_verdicts: list = field(default_factory=list)

    @property
    def outcome(self) -> str:
        return "success" if self.success else "failure"

    def closed_loop(self, p: Problem) -> ex.VectorField:
        if self.controller is None:
            return p.dynamics
        return close_loop(p.dynamics, self.controller)


# ----------------------------------------------------------------------------
# construction


def make_networks(p: Problem, cfg: CegisConfig, gen: torch.Generator) -> dict:
    nets = {}
    for name in p.functions:
        spec = cfg.nets.get(name)
        if spec is None:
            spec = NetSpec((6,), ("poly2",)) if name == "V" else NetSpec((5,), ("tanh",))
        lyapunov_like = name == "V" and p.kind in (Kind.STABILITY, Kind.ROA, Kind.SWA)
        nets[name] = Network(p.dim, spec, 1, positive_output_weights=lyapunov_like, generator=gen)
    if p.has_controller:
        spec = cfg.nets.get("ctrl") or DEFAULT_CONTROLLER
        nets["ctrl"] = Network(p.dim, spec, p.dynamics.dim_input, zero_at_origin=True, generator=gen)
    return nets


def translate(nets: dict, precision: float) -> tuple[dict, list | None]:
    """Rounded symbolic candidates (and controller)."""
    funcs = {k: n.to_symbolic(precision)[0] for k, n in nets.items() if k != "ctrl"}
    ctrl = nets["ctrl"].to_symbolic(precision) if "ctrl" in nets else None
    return funcs, ctrl


def symbolic_fn(e: ex.Expr):
    return lambda X: ex.evaluate([e], np.atleast_2d(X))[0]


# ----------------------------------------------------------------------------
# verification of one candidate set


@dataclass
class Verification:
    ok: bool
    failures: list  # (condition, verdict) with a witness
    resource: list  # (condition, verdict) that ran out of budget
    verdicts: list
    params: dict
    beta_failed: bool = False


def verify_candidates(p: Problem, funcs: dict, f_closed: ex.VectorField, vcfg: VerifierConfig,
                      rng: np.random.Generator, *, short_circuit: bool = False, beta_candidates: int = 10,
                      roa_samples: int = 2000, params: dict | None = None) -> Verification:
    conds = build_conditions(p)
    params = dict(params or {})
    params["band"] = p.delta
    if "V" in funcs and any(c.threshold == "roa" or any(l.value == "roa" for l in c.levels) for c in conds):
        if "roa" not in params:
            params["roa"] = cert.estimate_roa_level(symbolic_fn(funcs["V"]), p.regions["init"], roa_samples,
                                                    rng, p.roa_margin)
    verdicts, failures, resource = [], [], []
    cache: dict = {}
    for c in conds:
        if c.beta_dependent:
            continue
        vq = build_query(p, c, funcs, f_closed, params, cache)
        v = check(query_from(vq, vcfg), vcfg.batch)
        verdicts.append((c, v))
        if isinstance(v, (Counterexample, DeltaSat)):
            failures.append((c, v))
        elif isinstance(v, ResourceOut):
            resource.append((c, v))
        if short_circuit and not v.ok:
            break
    if failures or resource:
        return Verification(False, failures, resource, verdicts, params)
    if p.kind != Kind.RSWA:
        return Verification(True, [], [], verdicts, params)
    if "beta" in params:
        # a given level is checked as is, no search
        staged = [c for c in conds if c.beta_dependent]
        results = _check_staged(p, staged, funcs, f_closed, vcfg, params, cache, stop=short_circuit)
        bad = [(c, r) for c, r in results if isinstance(r, (Counterexample, DeltaSat))]
        res = [(c, r) for c, r in results if isinstance(r, ResourceOut)]
        return Verification(not bad and not res, bad, res, verdicts + results, params)
    return _beta_search(p, funcs, f_closed, vcfg, rng, conds, params, verdicts, cache, beta_candidates)


def _beta_search(p, funcs, f_closed, vcfg, rng, conds, params, verdicts, cache, count):
    """Try descending levels; the first that certifies both level conditions wins.

    When no level is accepted, witnesses are still returned so training can
    continue: those of the first level whose boundary condition held, else of
    the first level tried, else (empty grid) of the boundary-derived level.
    """
    staged = [c for c in conds if c.beta_dependent]
    v = symbolic_fn(funcs["V"])
    grid = cert.beta_grid(v, p.regions["final"], rng, count=count)
    first_fail = None
    for beta in grid:
        trial = dict(params, beta=beta)
        results = _check_staged(p, staged, funcs, f_closed, vcfg, trial, cache)
        if all(r.ok for _, r in results):
            return Verification(True, [], [], verdicts + results, trial)
        bad = [(c, r) for c, r in results if isinstance(r, (Counterexample, DeltaSat))]
        passed_edge = results[0][1].ok
        if bad and (first_fail is None or (passed_edge and not first_fail[0])):
            first_fail = (passed_edge, bad, trial)
    if first_fail is None:
        bounds = cert.beta_bounds(v, p.regions["final"], rng)
        if bounds is not None:
            trial = dict(params, beta=bounds[0])
            results = _check_staged(p, staged, funcs, f_closed, vcfg, trial, cache, stop=False)
            bad = [(c, r) for c, r in results if isinstance(r, (Counterexample, DeltaSat))]
            first_fail = (False, bad, trial)
    failures = first_fail[1] if first_fail else []
    ps = first_fail[2] if first_fail else params
    return Verification(False, failures, [], verdicts, ps, beta_failed=True)


def _check_staged(p, staged, funcs, f_closed, vcfg, trial, cache, stop=True):
    results = []
    for c in staged:
        r = check(query_from(build_query(p, c, funcs, f_closed, trial, cache), vcfg), vcfg.batch)
        results.append((c, r))
        if stop and not r.ok:
            break
    return results


# ----------------------------------------------------------------------------
# main loop


def synthesize(p: Problem, cfg: CegisConfig | None = None) -> SynthesisResult:
    cfg = cfg or CegisConfig()
    t_start = time.monotonic()
    rng = np.random.default_rng(cfg.seed)
    gen = torch.Generator().manual_seed(int(cfg.seed))
    vcfg = cfg.verifier or VerifierConfig(delta=p.delta)
    result = SynthesisResult(False)
    loops = cfg.loops_for(p)
    try:
        p.validate_containments(rng)
        nets = make_networks(p, cfg, gen)
        conds = build_conditions(p)
        data = Dataset(p, conds, cfg.train, rng)
    except (SamplingError, ValueError) as e:
        result.reason = f"setup failed: {e}"
        result.t_total = time.monotonic() - t_start
        return result
    params_all = [t for n in nets.values() for t in n.parameters()]
    opt = torch.optim.Adam(params_all, lr=cfg.train.learn_rate, betas=(0.9, 0.999))
    result.networks = nets
    for loop in range(1, loops + 1):
        result.loops = loop
        t0 = time.monotonic()
        try:
            train_iteration(p, nets, data, cfg.train, opt)
        except TrainingError as e:
            result.t_learn += time.monotonic() - t0
            result.reason = f"training failed: {e}"
            break
        result.t_learn += time.monotonic() - t0

        t0 = time.monotonic()
        funcs, ctrl = translate(nets, cfg.precision)
        f_closed = close_loop(p.dynamics, ctrl) if ctrl is not None else p.dynamics
        ver = verify_candidates(p, funcs, f_closed, vcfg, rng, short_circuit=cfg.short_circuit,
                                beta_candidates=cfg.beta_candidates)
        result.t_verify += time.monotonic() - t0
        result.last_verdicts = ver.verdicts
        if log.isEnabledFor(logging.DEBUG):
            log.debug("loop %d: %s%s", loop, ", ".join(f"{c.name}={type(v).__name__}" for c, v in ver.verdicts),
                      " (no level found)" if ver.beta_failed else "")
        result.certificates, result.controller = funcs, ctrl
        if ver.ok:
            result.success = True
            result.params = {k: v for k, v in ver.params.items() if k in ("roa", "beta")}
            result.reason = "valid"
            break
        if ver.resource and not ver.failures:
            c, v = ver.resource[0]
            result.reason = f"verifier resource limit on {c.name}: {v.reason}"
            break
        t0 = time.monotonic()
        train_params = dict(ver.params)
        train_params["band"] = cfg.train.band_epsilon
        for c, v in ver.failures:
            bundle = consolidate(v.point, c, p, nets, train_params, rng, cfg.consolidator)
            result.cex_count += data.add(c.name, bundle.cloud)
        result.t_learn += time.monotonic() - t0
        if cfg.time_budget is not None and time.monotonic() - t_start > cfg.time_budget:
            result.reason = "time budget exhausted"
            break
    else:
        result.reason = "out of loops"
    result.t_total = time.monotonic() - t_start
    return result


# ----------------------------------------------------------------------------
# suites

SUITE_COLUMNS = ["benchmark", "property", "N_s", "N_u", "seed", "outcome", "loops", "t_learn_s", "t_verify_s", "t_total_s"]


@dataclass
class SuiteRow:
    benchmark: str
    property: str
    N_s: int
    N_u: int
    seed: int
    outcome: str
    loops: int
    t_learn_s: float
    t_verify_s: float
    t_total_s: float

    def as_dict(self) -> dict:
        d = dict(self.__dict__)
        for k in ("t_learn_s", "t_verify_s", "t_total_s"):
            d[k] = f"{d[k]:.2f}"
        return d


def run_suite(entries: Sequence, seeds: Sequence[int], make=None, on_result=None) -> list[SuiteRow]:
    """Run every (benchmark, seed) cell. ``entries`` are registry entries (or
    anything with ``.build(seed)`` returning ``(problem, config)``)."""
    rows = []
    for entry in entries:
        for seed in seeds:
            problem, cfg = (make or (lambda e, s: e.build(seed=s)))(entry, seed)
            res = synthesize(problem, cfg)
            row = SuiteRow(
                str(getattr(entry, "id", entry)), problem.kind.value, problem.dim, problem.dynamics.dim_input,
                seed, res.outcome, res.loops, res.t_learn, res.t_verify, res.t_total,
            )
            rows.append(row)
            if on_result is not None:
                on_result(entry, seed, problem, res)
    return rows


def write_suite_csv(rows: Sequence[SuiteRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=SUITE_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow(r.as_dict())


def summarize(rows: Sequence[SuiteRow]) -> dict:
    """Success rate and min/mean/max time over successes, per benchmark."""
    out = {}
    for b in dict.fromkeys(r.benchmark for r in rows):
        mine = [r for r in rows if r.benchmark == b]
        ok = [r for r in mine if r.outcome == "success"]
        times = [r.t_total_s for r in ok]
        out[b] = {
            "S": 100.0 * len(ok) / len(mine),
            "min": min(times) if times else math.nan,
            "mean": float(np.mean(times)) if times else math.nan,
            "max": max(times) if times else math.nan,
        }
    return out
