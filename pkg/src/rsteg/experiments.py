"""Bottleneck calibration and parameter sweeps over (NR_p target, mechanism, IR_p, seed)."""

from __future__ import annotations

import csv
import io
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from .metrics import RunMetrics, retransmission_difference
from .netsim import RunConfig, Simulation, TopologyConfig, run_simulation
from .tcp_engine import SEC, Mechanism

CSV_HEADER = ("nr_p_target", "mechanism", "ir_p", "sb_mean_bps", "sb_std_bps", "rd_mean_pct", "rd_std_pct", "n_seeds")
WARDEN_HEADER = ("warden_tp_mean", "warden_fp_mean", "warden_peak_entries")


class CalibrationError(RuntimeError):
    pass


class SweepError(RuntimeError):
    pass


@dataclass
class Calibration:
    mechanism: Mechanism
    target: float
    bandwidth: float
    achieved: float
    converged: bool
    evaluations: list = field(default_factory=list)  # (X, mean rate)

    def line(self) -> str:
        return (
            f"mechanism={self.mechanism.value} target_nr_p={self.target * 100:.2f}% X_bps={self.bandwidth:.0f} "
            f"achieved_nr_p={self.achieved * 100:.3f}% converged={int(self.converged)} evaluations={len(self.evaluations)}"
        )


@dataclass
class ExperimentConfig:
    mechanisms: tuple = (Mechanism.RTO, Mechanism.FRR, Mechanism.SACK)
    ir_p: tuple = (0.005, 0.01, 0.02, 0.03, 0.04, 0.05)
    nr_p: tuple = (0.03,)
    seeds: tuple = tuple(range(1, 11))
    warmup: int = 60 * SEC
    measure: int = 540 * SEC
    topology: TopologyConfig = field(default_factory=TopologyConfig)
    scenario: int = 1
    tolerance: float = 0.0025
    x_bounds: tuple = (1.9e6, 3.0e6)
    calib_seeds: tuple = (1, 2, 3, 4, 5)
    calib_max_iter: int = 40
    bandwidths: dict = field(default_factory=dict)  # (Mechanism, nr_p) -> X, skips calibration
    workers: int = 1


@dataclass
class SweepRow:
    nr_p_target: float
    mechanism: Mechanism
    ir_p: float
    sb_mean: float
    sb_std: float
    rd_mean: float
    rd_std: float
    n_seeds: int
    bandwidth: float = 0.0
    sb_samples: tuple = ()
    rd_samples: tuple = ()
    warden: tuple | None = None  # (mean TP, mean FP, max peak entries) when a tap is configured

    def csv_fields(self) -> list[str]:
        out = [
            f"{self.nr_p_target * 100:g}",
            self.mechanism.value,
            f"{self.ir_p * 100:g}",
            f"{self.sb_mean:.3f}",
            f"{self.sb_std:.3f}",
            f"{self.rd_mean:.4f}",
            f"{self.rd_std:.4f}",
            str(self.n_seeds),
        ]
        if self.warden is not None:
            tp, fp, peak = self.warden
            out += [f"{tp:.3f}", f"{fp:.3f}", str(peak)]
        return out


def sample_std(values) -> float:
    values = list(values)
    return statistics.stdev(values) if len(values) >= 2 else 0.0


def _one_run(args) -> RunMetrics:
    topo, run, warmup, measure = args
    try:
        return run_simulation(Simulation(topo, run), warmup, measure)
    except Exception as exc:
        cell = f"mechanism={run.mechanism.value} ir_p={run.ir_p:g} rsteg={int(run.rsteg)} X={topo.bottleneck_bandwidth:.0f} seed={topo.seed}"
        raise SweepError(f"run failed at {cell}: {type(exc).__name__}: {exc}") from exc


def _map(jobs: list, workers: int) -> list[RunMetrics]:
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_one_run, jobs))
    return [_one_run(j) for j in jobs]


def baseline_rate(topo: TopologyConfig, mechanism: Mechanism, seeds, warmup: int, measure: int, workers: int = 1) -> float:
    jobs = [(replace(topo, seed=s), RunConfig(mechanism=mechanism, rsteg=False), warmup, measure) for s in seeds]
    return statistics.fmean(m.retrans_rate for m in _map(jobs, workers))


def calibrate_bottleneck(
    target_nr_p: float,
    mechanism: Mechanism,
    *,
    topology: TopologyConfig | None = None,
    tolerance: float = 0.0025,
    seeds=(1, 2, 3, 4, 5),
    bounds: tuple[float, float] = (1.9e6, 3.0e6),
    warmup: int = 60 * SEC,
    measure: int = 540 * SEC,
    max_iter: int = 40,
    grid: int = 12,
    workers: int = 1,
    min_rel_width: float = 1e-3,
) -> Calibration:
    """Find X whose mean baseline retransmission rate over ``seeds`` is within ``tolerance`` of the target.

    Reno over a drop-tail bottleneck is only monotone in X on average: the rate has
    jumps where the number of segments lost per queue overflow changes. So X is first
    scanned on a log grid, then each interval whose ends straddle the target is bisected,
    highest X first, until a point lands inside the tolerance. Returns the closest point
    seen if none does; raises if the target is outside the range spanned by the bounds.
    """
    if not 0.0 < target_nr_p < 1.0:
        raise ValueError(f"target NR_p must be a fraction in (0, 1), got {target_nr_p}")
    topo = topology or TopologyConfig()
    lo, hi = bounds
    if not 0 < lo < hi or grid < 2:
        raise ValueError(f"invalid bandwidth bounds {bounds} or grid {grid}")
    evals: list[tuple[float, float]] = []
    budget = max_iter

    def rate(x: float) -> float:
        nonlocal budget
        budget -= 1
        r = baseline_rate(replace(topo, bottleneck_bandwidth=x), mechanism, seeds, warmup, measure, workers)
        evals.append((x, r))
        return r

    def hit() -> bool:
        return any(abs(r - target_nr_p) <= tolerance for _, r in evals)

    xs = [lo * (hi / lo) ** (i / (grid - 1)) for i in range(grid)]
    points = []
    for x in reversed(xs):  # high X first: cheap runs, and usually the first crossing
        points.append((x, rate(x)))
        if hit():
            break
    points.reverse()
    rates = [r for _, r in points]
    if not hit() and not min(rates) <= target_nr_p <= max(rates):
        raise CalibrationError(
            f"target NR_p {target_nr_p * 100:.2f}% unreachable for X in [{lo:.0f}, {hi:.0f}]: "
            f"rates span {min(rates) * 100:.3f}%..{max(rates) * 100:.3f}% ({mechanism.value})"
        )
    brackets = [
        (points[i], points[i + 1])
        for i in range(len(points) - 1)
        if (points[i][1] - target_nr_p) * (points[i + 1][1] - target_nr_p) < 0
    ]
    for (a, ra), (b, rb) in reversed(brackets):
        while budget > 0 and not hit() and b / a - 1 > min_rel_width:
            mid = math.sqrt(a * b)
            rm = rate(mid)
            if (rm - target_nr_p) * (ra - target_nr_p) > 0:
                a, ra = mid, rm
            else:
                b, rb = mid, rm
        if hit() or budget <= 0:
            break
    best_x, best_r = min(evals, key=lambda e: (abs(e[1] - target_nr_p), -e[0]))
    return Calibration(mechanism, target_nr_p, best_x, best_r, abs(best_r - target_nr_p) <= tolerance, evals)


def resolve_bandwidth(cfg: ExperimentConfig, mechanism: Mechanism, nr_p: float) -> float:
    key = (mechanism, nr_p)
    if key not in cfg.bandwidths:
        cal = calibrate_bottleneck(
            nr_p, mechanism, topology=cfg.topology, tolerance=cfg.tolerance, seeds=cfg.calib_seeds,
            bounds=cfg.x_bounds, warmup=cfg.warmup, measure=cfg.measure, max_iter=cfg.calib_max_iter,
            workers=cfg.workers,
        )
        cfg.bandwidths[key] = cal.bandwidth
    return cfg.bandwidths[key]


def run_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Paired baseline / RSTEG runs per seed; rows ordered (nr_p, mechanism, ir_p)."""
    rows = []
    for nr_p in sorted(cfg.nr_p):
        for mech in cfg.mechanisms:
            x = resolve_bandwidth(cfg, mech, nr_p)
            topo = replace(cfg.topology, bottleneck_bandwidth=x)
            seeds = list(cfg.seeds)
            jobs = [(replace(topo, seed=s), RunConfig(mechanism=mech, rsteg=False), cfg.warmup, cfg.measure) for s in seeds]
            for ir in cfg.ir_p:
                run = RunConfig(mechanism=mech, ir_p=ir, scenario=cfg.scenario)
                jobs += [(replace(topo, seed=s), run, cfg.warmup, cfg.measure) for s in seeds]
            results = _map(jobs, cfg.workers)
            base = results[: len(seeds)]
            for idx, ir in sorted(enumerate(cfg.ir_p), key=lambda e: e[1]):
                runs = results[len(seeds) * (idx + 1) : len(seeds) * (idx + 2)]
                sb = [m.s_b for m in runs]
                rd = [retransmission_difference(m.retrans_rate, b.retrans_rate) for m, b in zip(runs, base)]
                warden = None
                if topo.warden_tap:
                    warden = (
                        statistics.fmean(m.warden["true_positives_window"] for m in runs),
                        statistics.fmean(m.warden["false_positives_window"] for m in runs),
                        max(m.warden["peak_entries"] for m in runs),
                    )
                rows.append(
                    SweepRow(nr_p, mech, ir, statistics.fmean(sb), sample_std(sb), statistics.fmean(rd), sample_std(rd),
                             len(seeds), x, tuple(sb), tuple(rd), warden)
                )
    return rows


def rows_to_csv(rows: list[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER + (WARDEN_HEADER if any(r.warden is not None for r in rows) else ()))
    for row in rows:
        w.writerow(row.csv_fields())
    return buf.getvalue()


def write_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(rows_to_csv(rows))


def pooled_std(*stds: float) -> float:
    return math.sqrt(sum(s * s for s in stds) / len(stds)) if stds else 0.0
