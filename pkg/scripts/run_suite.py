"""Run the benchmark suite over several seeds and print per-benchmark statistics.

    python scripts/run_suite.py --seeds 0-9 --out results/suite.csv
    python scripts/run_suite.py --benchmarks 1 15 20 --seeds 0-2
"""

from __future__ import annotations

import argparse
import logging
from pathlib import Path

from neurocert import benchmarks
from neurocert.cegis import run_suite, summarize, write_suite_csv
from neurocert.cli import _seeds


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--benchmarks", nargs="*", default=None, help="ids or names (default: non-extended suite)")
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--out", type=Path, default=Path("suite.csv"))
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    entries = [benchmarks.get(b) for b in args.benchmarks] if args.benchmarks else benchmarks.default_suite()

    def progress(entry, seed, problem, res):
        print(f"{entry.label:<28} seed {seed:<3} {res.outcome:<8} loops {res.loops:<4} {res.t_total:7.1f}s",
              flush=True)

    rows = run_suite(entries, _seeds(args.seeds), on_result=progress)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_suite_csv(rows, args.out)
    print(f"\n{'benchmark':<10} {'S%':>6} {'min':>8} {'mean':>8} {'max':>8}")
    for b, s in summarize(rows).items():
        print(f"{b:<10} {s['S']:6.0f} {s['min']:8.1f} {s['mean']:8.1f} {s['max']:8.1f}")
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
