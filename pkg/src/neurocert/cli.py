"""Command line entry point: ``neurocert {list,synth,suite,check,simulate}``.

Exit status: 0 on success / valid, 1 when a certificate fails (synthesis
out of loops, verifier witness, simulation violation), 2 on usage or
configuration errors. Output files go under ``--out`` or ``$NEUROCERT_OUT``
(default ``./runs``).
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import expr as ex
from .benchmarks import REGISTRY, default_suite, get, registry_listing
from .certificate import ProblemError
from .cegis import SUITE_COLUMNS, SuiteRow, summarize, synthesize, verify_candidates, write_suite_csv
from .config import ConfigError, dump_result, load_dump, load_spec, spec_from_entry
from .geometry import SamplingError, sample_interior
from .network import close_loop
from .simulate import check_property, integrate, write_contour_csv, write_trajectory_csv
from .verifier import Counterexample, DeltaSat, ResourceOut, VerifierConfig

OUT_ENV = "NEUROCERT_OUT"
EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def out_dir(args) -> Path:
    d = Path(args.out or os.environ.get(OUT_ENV, "runs"))
    d.mkdir(parents=True, exist_ok=True)
    return d


def _seeds(text: str) -> list[int]:
    """``"0-9"``, ``"1,4,7"`` or ``""`` (no seeds)."""
    seeds = []
    try:
        for part in filter(None, (t.strip() for t in text.split(","))):
            if "-" in part[1:]:
                a, b = part.split("-", 1)
                seeds.extend(range(int(a), int(b) + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise UsageError(f"bad seed list {text!r}; use e.g. 0-9 or 1,4,7") from None
    return seeds


def _overrides(args) -> dict:
    o = {}
    if getattr(args, "max_loops", None) is not None:
        o["max_loops"] = args.max_loops
    if getattr(args, "delta", None) is not None:
        o["delta"] = args.delta
    if getattr(args, "gamma", None) is not None:
        o["gamma"] = args.gamma
    if getattr(args, "no_control_loss", False):
        o["control_loss_weight"] = 0.0
    return o


def _source(args):
    """(ProblemSpec, CegisConfig, benchmark id or None) from --benchmark / --config."""
    if bool(args.benchmark) == bool(args.config):
        raise UsageError("give exactly one of --benchmark or --config")
    o = _overrides(args)
    prob_o = {k: o.pop(k) for k in ("delta", "gamma") if k in o}
    if args.benchmark:
        entry = get(args.benchmark)
        spec = spec_from_entry(entry, **prob_o)
        cfg = entry.config(args.seed, **o)
        return spec, cfg, entry.id
    spec, cfg = load_spec(args.config)
    for k, v in prob_o.items():
        setattr(spec, k, v)
    cfg.seed = args.seed
    if "max_loops" in o:
        cfg.max_loops = o["max_loops"]
    if "control_loss_weight" in o:
        cfg.train.control_loss_weight = 0.0
    return spec, cfg, None


# ----------------------------------------------------------------------------
# commands


def cmd_list(args) -> int:
    if args.full:
        sys.stdout.write(registry_listing())
        return EXIT_OK
    for e in REGISTRY.values():
        flag = " (extended)" if e.extended else ""
        print(f"{e.id:>3}  {e.name:<22} {e.kind.value:<9} N_s={len(e.dynamics)} N_u={e.n_inputs}{flag}")
    return EXIT_OK


def cmd_synth(args) -> int:
    spec, cfg, bid = _source(args)
    p = spec.build()
    res = synthesize(p, cfg)
    print(f"{spec.name or 'problem'} seed={cfg.seed}: {res.outcome} after {res.loops} loop(s) "
          f"[learn {res.t_learn:.2f}s, verify {res.t_verify:.2f}s, total {res.t_total:.2f}s] {res.reason}")
    d = out_dir(args)
    stem = f"{(spec.name or 'problem').replace(' ', '_')}_seed{cfg.seed}"
    record = {
        "benchmark": bid, "name": spec.name, "seed": cfg.seed, "outcome": res.outcome, "reason": res.reason,
        "loops": res.loops, "t_learn_s": round(res.t_learn, 2), "t_verify_s": round(res.t_verify, 2),
        "t_total_s": round(res.t_total, 2), "cex_count": res.cex_count, "params": res.params,
    }
    if res.success:
        path = dump_result(res, spec, d / f"{stem}.cert.json", meta=record)
        record["certificate"] = str(path)
        for k, e in res.certificates.items():
            print(f"  {k}(x) = {ex.pretty(e)}")
        if res.controller is not None:
            for j, c in enumerate(res.controller):
                print(f"  u{j}(x) = {ex.pretty(c)}")
        if res.params:
            print("  levels: " + ", ".join(f"{k}={v:.6g}" for k, v in res.params.items()))
        print(f"  certificate written to {path}")
    with open(d / "runs.jsonl", "a") as fh:
        fh.write(json.dumps(record) + "\n")
    return EXIT_OK if res.success else EXIT_FAIL


def cmd_suite(args) -> int:
    seeds = _seeds(args.seeds)
    entries = [get(b) for b in args.benchmarks] if args.benchmarks else default_suite()
    d = out_dir(args)
    csv_path = Path(args.csv) if args.csv else d / "suite.csv"
    o = _overrides(args)
    rows: list[SuiteRow] = []
    for entry in entries:
        for seed in seeds:
            p, cfg = entry.build(seed, o)
            res = synthesize(p, cfg)
            rows.append(SuiteRow(str(entry.id), p.kind.value, p.dim, p.dynamics.dim_input, seed, res.outcome,
                                 res.loops, res.t_learn, res.t_verify, res.t_total))
            if res.success and args.dump:
                dump_result(res, spec_from_entry(entry, **{k: o[k] for k in ("delta", "gamma") if k in o}),
                            d / f"{entry.label}_seed{seed}.cert.json")
            print(",".join(str(v) for v in rows[-1].as_dict().values()), flush=True)
    write_suite_csv(rows, csv_path)
    if rows:
        for b, s in summarize(rows).items():
            print(f"benchmark {b}: S={s['S']:.0f}% T min/mean/max = {s['min']:.2f}/{s['mean']:.2f}/{s['max']:.2f} s")
    print(f"wrote {csv_path} ({len(rows)} rows; columns {', '.join(SUITE_COLUMNS)})")
    return EXIT_OK


def _parse_assignments(items, what) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"{what} must look like NAME=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def _check_inputs(args):
    """(spec, functions, controller, params) from a dump or inline arguments."""
    if args.certificate:
        dump = load_dump(args.certificate)
        funcs, ctrl = dump.expressions()
        return dump.problem, funcs, ctrl, dict(dump.params)
    if args.benchmark:
        spec = spec_from_entry(get(args.benchmark))
    elif args.config:
        spec, _ = load_spec(args.config)
    else:
        raise UsageError("give a certificate file, or --benchmark/--config with --function")
    if args.delta is not None:
        spec.delta = args.delta
    if args.gamma is not None:
        spec.gamma = args.gamma
    n = len(spec.dynamics)
    funcs = {k: ex.parse(v, n) for k, v in _parse_assignments(args.function, "--function").items()}
    ctrl = ex.share([ex.parse(c, n) for c in args.controller]) if args.controller else None
    params = {k: float(v) for k, v in _parse_assignments(args.param, "--param").items()}
    return spec, funcs, ctrl, params


def cmd_check(args) -> int:
    spec, funcs, ctrl, params = _check_inputs(args)
    p = spec.build()
    missing = [k for k in p.functions if k not in funcs]
    if missing:
        raise UsageError(f"{p.kind.value} needs function(s) {', '.join(missing)}")
    if p.has_controller and ctrl is None:
        raise UsageError("the dynamics have inputs; give the controller (one expression per input)")
    f_closed = close_loop(p.dynamics, ctrl) if ctrl is not None else p.dynamics
    vcfg = VerifierConfig(delta=p.delta, timeout=args.timeout)
    t0 = time.monotonic()
    ver = verify_candidates(p, funcs, f_closed, vcfg, np.random.default_rng(args.seed), params=params)
    for c, v in ver.verdicts:
        line = f"{c.name:<18} {type(v).__name__}"
        if isinstance(v, (Counterexample, DeltaSat)):
            line += f" at x = {np.array2string(np.asarray(v.point), precision=6)} (value {v.magnitude:.6g})"
        elif isinstance(v, ResourceOut):
            line += f" ({v.reason})"
        print(line)
    if ver.beta_failed:
        print("no level beta certified both level conditions")
    levels = {k: v for k, v in ver.params.items() if k in ("roa", "beta")}
    if levels:
        print("levels: " + ", ".join(f"{k}={v:.6g}" for k, v in levels.items()))
    print(f"{'Valid' if ver.ok else 'NOT valid'} ({time.monotonic() - t0:.2f}s)")
    return EXIT_OK if ver.ok else EXIT_FAIL


def cmd_simulate(args) -> int:
    spec, funcs, ctrl, params = _check_inputs(args)
    p = spec.build()
    if p.has_controller and ctrl is None:
        raise UsageError("the dynamics have inputs; give the controller")
    f_closed = close_loop(p.dynamics, ctrl) if ctrl is not None else p.dynamics
    rng = np.random.default_rng(args.seed)
    verdict = check_property(p, f_closed, args.n, args.dt, args.T, rng, funcs, params)
    print(verdict.summary())
    for k, x in verdict.witnesses.items():
        print(f"  first {k} failure from x0 = {np.array2string(np.asarray(x), precision=6)}")
    d = out_dir(args)
    stem = (spec.name or "problem").replace(" ", "_")
    start_set = p.regions.get("init", p.regions["domain"])
    starts = sample_interior(start_set, args.dump, rng).points if args.dump > 0 else np.zeros((0, p.dim))
    for i, x0 in enumerate(starts):
        write_trajectory_csv(integrate(f_closed, x0, args.dt, args.T), d / f"{stem}_traj{i}.csv")
    lb, ub = p.regions["domain"].bounding_box()
    for k, e in funcs.items():
        write_contour_csv(e, lb, ub, d / f"{stem}_{k}_contour.csv", n=args.grid)
    print(f"wrote {len(starts)} trajectory CSV(s) and {len(funcs)} contour CSV(s) to {d}")
    return EXIT_OK if verdict.clean else EXIT_FAIL


# ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="neurocert", description="Neural certificate and controller synthesis.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("list", help="list the benchmark registry")
    s.add_argument("--full", action="store_true", help="print dynamics, regions and shapes")
    s.set_defaults(func=cmd_list)

    def common(s, seed=True):
        s.add_argument("--benchmark", "-b", help="registry id or name")
        s.add_argument("--config", "-c", help="TOML problem file")
        s.add_argument("--delta", type=float, help="verifier precision")
        s.add_argument("--gamma", type=float, help="decrease rate for reach certificates")
        s.add_argument("--out", help=f"output directory (default ${OUT_ENV} or ./runs)")
        if seed:
            s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("synth", help="synthesize one certificate")
    common(s)
    s.add_argument("--max-loops", type=int)
    s.add_argument("--no-control-loss", action="store_true", help="drop the controller cosine loss")
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("suite", help="run benchmarks x seeds, write a CSV table")
    s.add_argument("benchmarks", nargs="*", help="ids (default: all non-extended)")
    s.add_argument("--seeds", default="0-9", help="e.g. 0-9 or 1,5,7 (empty for none)")
    s.add_argument("--csv", help="CSV path (default OUT/suite.csv)")
    s.add_argument("--out")
    s.add_argument("--max-loops", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--gamma", type=float)
    s.add_argument("--no-control-loss", action="store_true")
    s.add_argument("--dump", action="store_true", help="write a certificate file per success")
    s.set_defaults(func=cmd_suite)

    for name, fn, hlp in (("check", cmd_check, "verify a given certificate without training"),
                          ("simulate", cmd_simulate, "simulate the closed loop, write CSVs")):
        s = sub.add_parser(name, help=hlp)
        s.add_argument("certificate", nargs="?", help="certificate JSON written by synth")
        common(s)
        s.add_argument("--function", "-f", action="append", help="NAME=EXPR, e.g. V='x0^2 + x1^2'")
        s.add_argument("--controller", "-k", action="append", help="controller expression, one per input")
        s.add_argument("--param", action="append", help="level, e.g. beta=-0.5 or roa=1.2")
        s.set_defaults(func=fn)
    sub.choices["check"].add_argument("--timeout", type=float, default=300.0)
    sim = sub.choices["simulate"]
    sim.add_argument("--n", type=int, default=100, help="number of trajectories")
    sim.add_argument("--T", type=float, default=50.0)
    sim.add_argument("--dt", type=float, default=1e-3)
    sim.add_argument("--dump", type=int, default=5, help="trajectories written as CSV")
    sim.add_argument("--grid", type=int, default=101, help="contour grid size")
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, ProblemError, ex.ParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SamplingError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
