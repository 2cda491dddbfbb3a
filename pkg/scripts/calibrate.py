"""Calibrate the bottleneck for every (mechanism, NR_p target) and print a ``bandwidths`` config line.

    python3 scripts/calibrate.py --targets 0.03,0.05 --warmup 10 --measure 60
"""

import argparse
import time

from rsteg.experiments import calibrate_bottleneck
from rsteg.tcp_engine import SEC, Mechanism


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--targets", default="0.03,0.05", help="NR_p targets as fractions")
    ap.add_argument("--mechanisms", default="RTO,FRR,SACK")
    ap.add_argument("--seeds", type=int, default=6, help="seeds 1..N averaged per evaluation")
    ap.add_argument("--warmup", type=float, default=10.0)
    ap.add_argument("--measure", type=float, default=60.0)
    ap.add_argument("--workers", type=int, default=1)
    args = ap.parse_args()

    entries = []
    for target in (float(t) for t in args.targets.split(",")):
        for mech in (Mechanism.parse(m) for m in args.mechanisms.split(",")):
            t0 = time.time()
            cal = calibrate_bottleneck(
                target, mech, seeds=tuple(range(1, args.seeds + 1)), warmup=int(args.warmup * SEC),
                measure=int(args.measure * SEC), workers=args.workers,
            )
            print(f"{cal.line()} ({time.time() - t0:.0f} s)", flush=True)
            entries.append(f"{mech.value}@{target:g}:{cal.bandwidth:.0f}")
    print("bandwidths = " + ", ".join(entries))


if __name__ == "__main__":
    main()
