"""Command-line front end: ``rsteg {calibrate,run,sweep,warden-analyze}``.

Configuration comes from an optional flat ``key = value`` file (``#`` starts a
comment) with flags layered on top. Probabilities are fractions in [0, 1];
durations are seconds; bandwidths are bits/s.
"""

from __future__ import annotations

import argparse
import random
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .experiments import ExperimentConfig, calibrate_bottleneck, rows_to_csv, run_sweep
from .metrics import RunMetrics
from .netsim import ConfigError, RunConfig, Simulation, TopologyConfig, run_simulation
from .tcp_engine import SEC, Mechanism
from .warden import format_report, replay_trace

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


def _fraction(text: str) -> float:
    value = float(text)
    if not 0.0 <= value <= 1.0:
        raise ConfigError(f"{value:g} is not a fraction in [0, 1] (probabilities are fractions, e.g. 0.01 for 1%)")
    return value


def _fractions(text: str) -> tuple[float, ...]:
    return tuple(_fraction(v) for v in _split(text))


def _split(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def _mechanism(text: str) -> Mechanism:
    try:
        return Mechanism[text.strip().upper()]
    except KeyError:
        raise ConfigError(f"unknown mechanism {text!r}; expected one of RTO, FRR, SACK") from None


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{text!r} is not a boolean")


def _seconds(text: str) -> int:
    value = float(text)
    if value < 0:
        raise ConfigError(f"duration {value:g} s is negative")
    return int(round(value * SEC))


def _optional(conv):
    return lambda text: None if text.strip().lower() in ("", "none") else conv(text)


def _bandwidths(text: str) -> dict:
    """``RTO@0.03:2243300, FRR@0.03:2107838`` -> {(Mechanism, nr_p): X}."""
    out = {}
    for item in _split(text):
        try:
            key, x = item.split(":")
            mech, nr = key.split("@")
        except ValueError:
            raise ConfigError(f"bandwidth entry {item!r} is not MECH@nr_p:bps") from None
        out[(_mechanism(mech), _fraction(nr))] = float(x)
    return out


# key -> (section, converter). Sections: topo = TopologyConfig, run = RunConfig, exp = ExperimentConfig, cli = local.
CONFIG_KEYS = {
    "bottleneck_bandwidth": ("topo", float),
    "access_bandwidth": ("topo", float),
    "access_delay": ("topo", _seconds),
    "bottleneck_delay": ("topo", _seconds),
    "delay_spread": ("topo", float),
    "queue_capacity": ("topo", int),
    "udp_rate": ("topo", float),
    "udp_packet_size": ("topo", int),
    "udp_jitter": ("topo", float),
    "p_corrupt": ("topo", _fraction),
    "warden_tap": ("topo", _optional(str)),
    "seed": ("cli", int),
    "mechanism": ("run", _mechanism),
    "rsteg": ("run", _bool),
    "scenario": ("run", int),
    "mss": ("run", int),
    "embed_len": ("run", int),
    "app_rate": ("run", _optional(float)),
    "warden_digest": ("run", _bool),
    "warden_window": ("run", _seconds),
    "drop_marks": ("run", int),
    "drop_carriers": ("run", int),
    "transfer_bytes": ("run", _optional(int)),
    "ir_p": ("exp", _fractions),
    "mechanisms": ("exp", lambda t: tuple(_mechanism(m) for m in _split(t))),
    "nr_p": ("exp", _fractions),
    "seeds": ("exp", lambda t: tuple(int(s) for s in _split(t))),
    "n_seeds": ("cli", int),
    "warmup": ("exp", _seconds),
    "measure": ("exp", _seconds),
    "tolerance": ("exp", _fraction),
    "x_bounds": ("exp", lambda t: tuple(float(v) for v in _split(t))),
    "calib_seeds": ("exp", lambda t: tuple(int(s) for s in _split(t))),
    "calib_max_iter": ("exp", int),
    "workers": ("exp", int),
    "bandwidths": ("exp", _bandwidths),
}


def parse_config_text(text: str, source: str = "<config>") -> dict:
    """Raw ``key = value`` pairs, converted by ``CONFIG_KEYS``. Unknown keys are an error."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key = value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        values[key] = _convert(key, value, f"{source}:{lineno}")
    return values


def _convert(key: str, value: str, where: str):
    try:
        return CONFIG_KEYS[key][1](value)
    except ConfigError as exc:
        raise ConfigError(f"{where}: {key}: {exc}") from None
    except ValueError as exc:
        raise ConfigError(f"{where}: {key}: bad value {value!r} ({exc})") from None


@dataclass
class CliConfig:
    subcommand: str
    values: dict = field(default_factory=dict)
    seed: int = 0
    seed_chosen: bool = False  # True when no seed was given and one was drawn
    out: Path | None = None
    trace: Path | None = None
    steg_in: Path | None = None
    steg_out: Path | None = None
    trace_file: Path | None = None

    def section(self, name: str) -> dict:
        return {k: v for k, v in self.values.items() if CONFIG_KEYS[k][0] == name}

    def topology(self) -> TopologyConfig:
        topo = TopologyConfig(**self.section("topo"), seed=self.seed)
        topo.validate()
        return topo

    def run_config(self) -> RunConfig:
        irs = self.values.get("ir_p", (0.01,))
        if len(irs) != 1:
            raise ConfigError(f"run takes a single ir_p, got {len(irs)} values")
        kw = self.section("run")
        if "mechanisms" in self.values and "mechanism" not in kw:
            if len(self.values["mechanisms"]) != 1:
                raise ConfigError("run takes a single mechanism")
            kw["mechanism"] = self.values["mechanisms"][0]
        run = RunConfig(ir_p=irs[0], **kw)
        if self.steg_in is not None:
            run.steg_data = _read_input(self.steg_in)
        run.validate()
        return run

    def experiment(self) -> ExperimentConfig:
        kw = self.section("exp")
        if "seeds" not in kw:
            kw["seeds"] = tuple(self.seed + i for i in range(self.values.get("n_seeds", 10)))
        if "scenario" in self.values:
            kw["scenario"] = self.values["scenario"]
        cfg = ExperimentConfig(**kw, topology=self.topology())
        if len(cfg.seeds) < 1 or cfg.workers < 1:
            raise ConfigError("need at least one seed and one worker")
        if len(cfg.x_bounds) != 2:
            raise ConfigError("x_bounds needs two values: low, high")
        return cfg

    def window(self) -> tuple[int, int]:
        defaults = ExperimentConfig()
        return self.values.get("warmup", defaults.warmup), self.values.get("measure", defaults.measure)


def _read_input(path: Path) -> bytes:
    try:
        return path.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value configuration file")
    common.add_argument("--seed", type=int, help="base seed; drawn at random and printed if omitted")
    common.add_argument("--mechanism", help="RTO, FRR or SACK (comma list for calibrate/sweep)")
    common.add_argument("--ir-p", help="intentional retransmission probability, fraction (comma list for sweep)")
    common.add_argument("--nr-p", help="target natural retransmission probability, fraction (comma list)")
    common.add_argument("--scenario", type=int, choices=(1, 2, 3, 4))
    common.add_argument("--warmup", help="seconds before the measurement window opens")
    common.add_argument("--measure", help="measurement window, seconds")
    common.add_argument("--workers", type=int, help="parallel worker processes for calibrate/sweep")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override any config key")
    common.add_argument("--out", type=Path, help="output file (CSV for sweep, metrics for run)")

    parser = _Parser(prog="rsteg", description="Retransmission steganography simulator")
    sub = parser.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)
    sub.add_parser("calibrate", parents=[common], help="find bottleneck bandwidths for NR_p targets")
    run = sub.add_parser("run", parents=[common], help="run one simulation and print its metrics")
    run.add_argument("--trace", type=Path, help="write the event trace here")
    run.add_argument("--steg-in", type=Path, help="file whose bytes form the steganogram")
    run.add_argument("--steg-out", type=Path, help="write the extracted steganogram bits (packed) here")
    sub.add_parser("sweep", parents=[common], help="mechanism x ir_p sweep, CSV output")
    wa = sub.add_parser("warden-analyze", parents=[common], help="replay a trace through the warden")
    wa.add_argument("trace_file", type=Path)
    return parser


def parse_args(argv: list[str]) -> CliConfig:
    ns = build_parser().parse_args(argv)
    values = {}
    if ns.config is not None:
        try:
            text = ns.config.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {ns.config}: {exc.strerror}") from None
        values.update(parse_config_text(text, str(ns.config)))
    overrides = [("seed", ns.seed), ("ir_p", ns.ir_p), ("nr_p", ns.nr_p), ("scenario", ns.scenario),
                 ("warmup", ns.warmup), ("measure", ns.measure), ("workers", ns.workers)]
    for item in ns.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = (p.strip() for p in item.split("=", 1))
        if key not in CONFIG_KEYS:
            raise ConfigError(f"--set: unknown key {key!r}")
        values[key] = _convert(key, value, "--set")
    for key, value in overrides:
        if value is not None:
            values[key] = value if not isinstance(value, str) else _convert(key, value, f"--{key.replace('_', '-')}")
    if ns.mechanism is not None:
        mechs = tuple(_mechanism(m) for m in _split(ns.mechanism))
        values["mechanisms"] = mechs
        values["mechanism"] = mechs[0]
    cfg = CliConfig(ns.subcommand, values)
    if "seed" in values:
        cfg.seed = values["seed"]
    else:
        cfg.seed = random.SystemRandom().randrange(1, 2**31)
        cfg.seed_chosen = True
    cfg.out = ns.out
    cfg.trace = getattr(ns, "trace", None)
    cfg.steg_in = getattr(ns, "steg_in", None)
    cfg.steg_out = getattr(ns, "steg_out", None)
    cfg.trace_file = getattr(ns, "trace_file", None)
    return cfg


def _cmd_calibrate(cfg: CliConfig, out) -> None:
    exp = cfg.experiment()
    print(f"seed = {cfg.seed}", file=out)
    for nr_p in exp.nr_p:
        for mech in exp.mechanisms:
            cal = calibrate_bottleneck(
                nr_p, mech, topology=exp.topology, tolerance=exp.tolerance, seeds=exp.calib_seeds,
                bounds=exp.x_bounds, warmup=exp.warmup, measure=exp.measure, max_iter=exp.calib_max_iter,
                workers=exp.workers,
            )
            print(cal.line(), file=out)


def _cmd_run(cfg: CliConfig, out) -> None:
    topo, run = cfg.topology(), cfg.run_config()
    run = replace(run, trace=cfg.trace is not None)
    warmup, measure = cfg.window()
    sim = Simulation(topo, run)
    metrics: RunMetrics = run_simulation(sim, warmup, measure)
    header = [
        f"seed = {cfg.seed}",
        f"mechanism = {run.mechanism.value}",
        f"scenario = {run.scenario}",
        f"ir_p = {run.ir_p:g}",
        f"X_bps = {topo.bottleneck_bandwidth:.0f}",
    ]
    if sim.steg_receiver is not None:
        got = sim.steg_receiver.extracted_bits()
        sent = sim.steg_source.sent_bits()
        header.append(f"steg_prefix_ok = {int(np.array_equal(got, sent[: len(got)]))}")
        if cfg.steg_out is not None:
            cfg.steg_out.write_bytes(np.packbits(got).tobytes())
    text = "\n".join(header) + "\n" + metrics.to_text() + "\n"
    out.write(text)
    if cfg.out is not None:
        cfg.out.write_text(text)
    if cfg.trace is not None:
        cfg.trace.write_text("\n".join(sim.trace) + "\n")


def _cmd_sweep(cfg: CliConfig, out) -> None:
    exp = cfg.experiment()
    rows = run_sweep(exp)
    csv_text = rows_to_csv(rows)
    info = [f"seed = {cfg.seed}"]
    info += [f"mechanism={m.value} nr_p={nr:g} X_bps={x:.0f}" for (m, nr), x in sorted(exp.bandwidths.items(), key=lambda kv: (kv[0][1], kv[0][0].value))]
    if cfg.out is not None:
        cfg.out.write_text(csv_text)
        info.append(f"wrote {len(rows)} rows to {cfg.out}")
        out.write("\n".join(info) + "\n")
    else:
        print("\n".join(info), file=sys.stderr)
        out.write(csv_text)


def _cmd_warden_analyze(cfg: CliConfig, out) -> None:
    try:
        lines = cfg.trace_file.read_text().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read trace {cfg.trace_file}: {exc.strerror}") from None
    window = cfg.values.get("warden_window", RunConfig().warden_window)
    text = format_report(replay_trace(lines, window)) + "\n"
    out.write(text)
    if cfg.out is not None:
        cfg.out.write_text(text)


COMMANDS = {"calibrate": _cmd_calibrate, "run": _cmd_run, "sweep": _cmd_sweep, "warden-analyze": _cmd_warden_analyze}


def _fail(code: int, exc: BaseException) -> int:
    msg = " ".join(str(exc).split()).replace('"', "'")
    print(f'rsteg: error code={code} type={type(exc).__name__} message="{msg}"', file=sys.stderr)
    return code


def main(argv: list[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    argv = sys.argv[1:] if argv is None else argv
    if any(a in ("-h", "--help") for a in argv):
        build_parser().parse_args(argv)  # prints help and exits 0
    try:
        cfg = parse_args(argv)
        if cfg.subcommand in ("run", "calibrate", "sweep"):
            cfg.topology()
        if cfg.subcommand == "run":
            cfg.run_config()
        elif cfg.subcommand != "warden-analyze":
            cfg.experiment()
    except (ConfigError, ValueError, TypeError) as exc:
        return _fail(EXIT_CONFIG, exc)
    if cfg.seed_chosen and cfg.subcommand != "warden-analyze":
        print(f"seed chosen at random: {cfg.seed}", file=sys.stderr)
    try:
        COMMANDS[cfg.subcommand](cfg, out)
    except ConfigError as exc:
        return _fail(EXIT_CONFIG, exc)
    except Exception as exc:  # any runtime failure becomes exit 1 with one line
        return _fail(EXIT_RUNTIME, exc)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
