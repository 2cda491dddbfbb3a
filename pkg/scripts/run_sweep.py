"""Full mechanism x IR_p sweep at one or more NR_p targets; writes the CSV table.

    python3 scripts/run_sweep.py --out results/sweep.csv
    python3 scripts/run_sweep.py --bandwidths RTO@0.03:2243300,FRR@0.03:2107838,SACK@0.03:2174514 --targets 0.03
"""

import argparse
import time
from pathlib import Path

from rsteg.cli import _bandwidths
from rsteg.experiments import ExperimentConfig, rows_to_csv, run_sweep
from rsteg.tcp_engine import SEC, Mechanism


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", default="0.03,0.05")
    ap.add_argument("--mechanisms", default="RTO,FRR,SACK")
    ap.add_argument("--ir-p", default="0.005,0.01,0.02,0.03,0.04,0.05")
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--warmup", type=float, default=60.0)
    ap.add_argument("--measure", type=float, default=540.0)
    ap.add_argument("--bandwidths", default="", help="MECH@nr_p:bps list; missing cells are calibrated")
    ap.add_argument("--workers", type=int, default=1)
    ap.add_argument("--out", type=Path, default=Path("sweep.csv"))
    args = ap.parse_args()

    cfg = ExperimentConfig(
        mechanisms=tuple(Mechanism.parse(m) for m in args.mechanisms.split(",")),
        ir_p=tuple(float(v) for v in args.ir_p.split(",")),
        nr_p=tuple(float(v) for v in args.targets.split(",")),
        seeds=tuple(range(1, args.seeds + 1)),
        warmup=int(args.warmup * SEC),
        measure=int(args.measure * SEC),
        bandwidths=_bandwidths(args.bandwidths) if args.bandwidths else {},
        workers=args.workers,
    )
    t0 = time.time()
    rows = run_sweep(cfg)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    args.out.write_text(rows_to_csv(rows))
    for (mech, nr), x in sorted(cfg.bandwidths.items(), key=lambda kv: (kv[0][1], kv[0][0].value)):
        print(f"{mech.value} NR_p {nr:g}: X = {x:.0f} bps")
    print(f"{len(rows)} rows -> {args.out} in {time.time() - t0:.0f} s")


if __name__ == "__main__":
    main()
