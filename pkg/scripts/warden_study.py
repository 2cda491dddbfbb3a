"""Warden behaviour with and without RSTEG, and false positives from corruption.

    python3 scripts/warden_study.py --seeds 5 --measure 60
"""

import argparse
from dataclasses import replace

from rsteg.netsim import RunConfig, Simulation, TopologyConfig, run_simulation
from rsteg.tcp_engine import SEC, Mechanism
from rsteg.warden import format_report


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--measure", type=float, default=60.0)
    ap.add_argument("--p-corrupt", type=float, default=0.0009)
    ap.add_argument("--digest", action="store_true", help="store payload digests instead of payloads")
    args = ap.parse_args()
    measure = int(args.measure * SEC)

    cases = [
        ("rsteg ir_p=3%", TopologyConfig(warden_tap="R1"), RunConfig(ir_p=0.03)),
        ("plain tcp", TopologyConfig(warden_tap="R1"), RunConfig(rsteg=False)),
        (f"plain tcp, p_corrupt={args.p_corrupt:g}", TopologyConfig(warden_tap="R1", p_corrupt=args.p_corrupt), RunConfig(rsteg=False)),
    ]
    for label, topo, run in cases:
        for mech in Mechanism:
            for seed in range(1, args.seeds + 1):
                r = replace(run, mechanism=mech, warden_digest=args.digest)
                sim = Simulation(replace(topo, seed=seed), r)
                run_simulation(sim, 0, measure)
                print(f"== {label} {mech.value} seed {seed}: carriers at tap {sim.carrier_retrans_at_tap}, delivered {sim.receiver.stats.delivered_bytes} B")
                print(format_report(sim.warden))


if __name__ == "__main__":
    main()
