"""Compare synthesis with and without the control loss on the controlled reach benchmarks.

    python scripts/ablation_control_loss.py --seeds 0-9 --out results/ablation.csv
"""

from __future__ import annotations

import argparse
import csv
import statistics
from pathlib import Path

from neurocert.benchmarks import CONTROL_REACH, REGISTRY
from neurocert.cegis import synthesize
from neurocert.cli import _seeds


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--benchmarks", nargs="*", type=int, default=list(CONTROL_REACH))
    ap.add_argument("--seeds", default="0-9")
    ap.add_argument("--out", type=Path, default=Path("ablation.csv"))
    args = ap.parse_args(argv)

    rows = []
    for bid in args.benchmarks:
        for seed in _seeds(args.seeds):
            for label, weight in (("with", None), ("without", 0.0)):
                p, cfg = REGISTRY[bid].build(seed=seed, overrides={"control_loss_weight": weight})
                res = synthesize(p, cfg)
                rows.append({"benchmark": bid, "seed": seed, "control_loss": label, "outcome": res.outcome,
                             "loops": res.loops, "t_total_s": f"{res.t_total:.3f}"})
                print(f"{bid:<3} seed {seed:<3} {label:<8} {res.outcome:<8} loops {res.loops:<4} "
                      f"{res.t_total:6.1f}s", flush=True)

    args.out.parent.mkdir(parents=True, exist_ok=True)
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["benchmark"])
        w.writeheader()
        w.writerows(rows)
    for label in ("with", "without"):
        mine = [r for r in rows if r["control_loss"] == label]
        ok = [r["loops"] for r in mine if r["outcome"] == "success"]
        med = statistics.median(ok) if ok else float("nan")
        print(f"{label:<8} L_u: {len(ok)}/{len(mine)} success, median loops {med}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
