"""Packet-level simulation of the dumbbell used for the RSTEG experiments.

    tcp_src --10M--> R1 --X--> R2 --10M--> sink
    udp_src --10M--> R1

Every link is a drop-tail FIFO. Departures are computed analytically when a packet
is enqueued, so each hop costs a single arrival event. UDP cross traffic is absorbed
at R2; the R2 -> sink link runs at 10 Mbps and can never be its bottleneck.
"""

from __future__ import annotations

import hashlib
import random
from collections import Counter, deque
from dataclasses import dataclass, field

from .events import EventKind, SimTime, Simulator
from .metrics import RunMetrics
from .rsteg_control import MiddleboxSR, MiddleboxSS, SteganogramSource, StegReceiverCtl, StegSenderCtl
from .steg_core import DEFAULT_EMBED_LEN, StegKey, mask_payload, position_schedule
from .tcp_engine import SEC, BulkSource, Mechanism, RateSource, Segment, TcpConfig, TcpReceiver, TcpSender, checksum_ok
from .warden import Verdict, WardenStore

NODES = ("tcp_src", "udp_src", "R1", "R2", "sink")
LINKS = (("tcp_src", "R1"), ("udp_src", "R1"), ("R1", "R2"), ("R2", "sink"))
ADDR = {"tcp_src": 0x0A000001, "udp_src": 0x0A000002, "sink": 0x0A000003}
MS = 1000


class ConfigError(ValueError):
    pass


@dataclass
class TopologyConfig:
    bottleneck_bandwidth: float = 1.985e6  # bits/s
    access_bandwidth: float = 10e6
    access_delay: SimTime = 10 * MS
    bottleneck_delay: SimTime = 10 * MS
    # Each duplex link's delay is drawn per seed, uniform in nominal x (1 +- delay_spread).
    # A single Reno flow over drop-tail phase-locks on the exact RTT; spreading it keeps
    # the loss rate a smooth function of X once averaged over seeds.
    delay_spread: float = 0.5
    queue_capacity: int = 50
    udp_rate: float = 1.8e6
    udp_packet_size: int = 1000
    udp_jitter: float = 0.5  # CBR gaps uniform in (1 +- jitter) x mean
    p_corrupt: float = 0.0
    warden_tap: str | None = None  # "R1": bottleneck egress of R1
    seed: int = 1

    def validate(self) -> None:
        for name in ("bottleneck_bandwidth", "access_bandwidth"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be > 0")
        if self.udp_rate < 0:
            raise ConfigError("udp_rate must be >= 0")
        if self.udp_packet_size <= 0 or self.queue_capacity < 1:
            raise ConfigError("udp_packet_size and queue_capacity must be positive")
        if self.access_delay < 0 or self.bottleneck_delay < 0:
            raise ConfigError("link delays must be >= 0")
        if not 0.0 <= self.p_corrupt <= 1.0:
            raise ConfigError("p_corrupt must be a probability in [0, 1]")
        if not 0.0 <= self.delay_spread < 1.0:
            raise ConfigError("delay_spread must be in [0, 1)")
        if not 0.0 <= self.udp_jitter < 1.0:
            raise ConfigError("udp_jitter must be in [0, 1)")
        if self.warden_tap not in (None, "R1"):
            raise ConfigError(f"unsupported warden tap {self.warden_tap!r}; only R1 is modelled")


@dataclass
class RunConfig:
    mechanism: Mechanism = Mechanism.FRR
    ir_p: float = 0.0
    rsteg: bool = True
    scenario: int = 1
    mss: int = 1000
    embed_len: int = DEFAULT_EMBED_LEN
    app_rate: float | None = None  # segments/s, None = saturating source
    steg_data: bytes | None = None
    steg_key: bytes | None = None
    warden_digest: bool = False
    warden_window: SimTime = 10 * SEC
    trace: bool = False
    record_delivered: bool = False
    drop_marks: int = 0  # drop the first N request-mark transmissions at R1 ingress
    drop_carriers: int = 0  # drop the first N carrier transmissions at R1 ingress
    transfer_bytes: int | None = None  # finite transfer; None = unbounded

    def validate(self) -> None:
        if not 0.0 <= self.ir_p <= 1.0:
            raise ConfigError(f"ir_p must be a fraction in [0, 1], got {self.ir_p}")
        if self.scenario not in (1, 2, 3, 4):
            raise ConfigError(f"scenario must be 1-4, got {self.scenario}")
        if self.mss <= 0 or self.embed_len < 1:
            raise ConfigError("mss and embed_len must be positive")
        if self.transfer_bytes is not None and self.transfer_bytes <= 0:
            raise ConfigError("transfer_bytes must be > 0")
        if self.app_rate is not None and self.app_rate <= 0:
            raise ConfigError("app_rate must be > 0 segments/s")


class Link:
    """Drop-tail FIFO with serialization and propagation delay."""

    __slots__ = ("sim", "name", "bandwidth", "delay", "capacity", "deliver", "_finish", "busy_until", "drops", "sent", "on_drop")

    def __init__(self, sim: Simulator, name: str, bandwidth: float, delay: SimTime, capacity: int, deliver=None):
        self.sim = sim
        self.name = name
        self.bandwidth = int(bandwidth)
        self.delay = int(delay)
        self.capacity = capacity
        self.deliver = deliver
        self._finish: deque[SimTime] = deque()
        self.busy_until: SimTime = 0
        self.drops = 0
        self.sent = 0
        self.on_drop = None

    def serialization(self, size: int) -> SimTime:
        bw = self.bandwidth
        return (size * 8 * SEC + bw // 2) // bw

    def queue_length(self) -> int:
        now = self.sim.now
        waiting = sum(1 for f in self._finish if f > now)
        return max(waiting - 1, 0)

    def transmit(self, pkt) -> bool:
        """Enqueue ``pkt``; schedule its arrival at the far end or drop it when the queue is full."""
        now = self.sim.now
        fin = self._finish
        while fin and fin[0] <= now:
            fin.popleft()
        if fin and len(fin) - 1 >= self.capacity:
            self.drops += 1
            if self.on_drop is not None:
                self.on_drop(self, pkt)
            return False
        start = self.busy_until if self.busy_until > now else now
        finish = start + self.serialization(pkt.size)
        self.busy_until = finish
        fin.append(finish)
        self.sent += 1
        self.sim.schedule(finish + self.delay, self.deliver, pkt)
        return True


class UdpPacket:
    __slots__ = ("size", "seq")

    def __init__(self, size: int, seq: int):
        self.size = size
        self.seq = seq


def corrupt_maybe(seg: Segment, p_corrupt: float, rng: random.Random) -> Segment:
    """With probability ``p_corrupt`` flip one payload byte; the checksum field is left stale."""
    if p_corrupt <= 0.0 or not seg.payload or rng.random() >= p_corrupt:
        return seg
    buf = bytearray(seg.payload)
    buf[rng.randrange(len(buf))] ^= rng.randrange(1, 256)
    out = seg.copy(payload=bytes(buf))
    out.meta.corrupted = True
    return out


class _RecordingSource:
    """Wraps the application source and remembers every original payload by seq."""

    def __init__(self, inner, isn: int, originals: dict, limit: int | None = None):
        self.inner = inner
        self.next_seq = isn
        self.originals = originals
        self.remaining = limit
        self.written = 0

    def next_payload(self, n: int):
        if self.remaining is not None:
            if self.remaining <= 0:
                return None
            n = min(n, self.remaining)
        payload = self.inner.next_payload(n)
        if payload is not None:
            self.originals[self.next_seq] = payload
            self.next_seq += len(payload)
            self.written += len(payload)
            if self.remaining is not None:
                self.remaining -= len(payload)
        return payload


@dataclass
class DeliveryChecker:
    """Ground-truth comparison of the receiver's delivered stream with what the application wrote."""

    sk: StegKey
    embed_len: int
    marked: set
    originals: dict = field(default_factory=dict)
    segments_ok: int = 0
    segments_is_overwritten: int = 0
    mismatched: list = field(default_factory=list)
    delivered: list | None = None

    def on_delivered(self, pieces) -> None:
        for seq, payload in pieces:
            orig = self.originals.pop(seq, None)
            if self.delivered is not None:
                self.delivered.append(payload)
            if orig is None or payload == orig:
                self.segments_ok += orig is not None
                continue
            if seq in self.marked and len(payload) == len(orig):
                sched = position_schedule(self.sk, seq, len(orig) * 8, self.embed_len)
                if mask_payload(payload, sched) == mask_payload(orig, sched):
                    self.segments_is_overwritten += 1
                    continue
            self.mismatched.append(seq)

    def delivered_bytes(self) -> bytes:
        return b"".join(self.delivered or [])


def _flags(seg: Segment) -> str:
    return "A" if seg.flags else "."


class Simulation:
    """One configured instance of the dumbbell with its TCP flow, steganographic roles and warden."""

    def __init__(self, topo: TopologyConfig, run: RunConfig | None = None):
        topo.validate()
        run = run or RunConfig()
        run.validate()
        self.topo = topo
        self.run_cfg = run
        self.sim = Simulator()
        self.sim.describe = self.describe
        seed = topo.seed
        self.rng = {name: random.Random(f"{seed}:{name}") for name in ("payload", "mark", "steg", "corrupt", "udp")}
        self.trace: list[str] | None = [] if run.trace else None
        self._drop_marks = run.drop_marks
        self._drop_carriers = run.drop_carriers

        self.tcp_cfg = TcpConfig(mss=run.mss)
        self.mechanism = run.mechanism
        self.sk = StegKey(run.steg_key) if run.steg_key else StegKey.from_seed(seed)
        self.marked: set[int] = set()
        self.counters: Counter = Counter()
        self.checker = DeliveryChecker(self.sk, run.embed_len, self.marked, delivered=[] if run.record_delivered else None)

        sim = self.sim
        acc, qcap = topo.access_bandwidth, topo.queue_capacity
        self.delays = self._draw_delays()
        d = self.delays
        self.links = {
            ("tcp_src", "R1"): Link(sim, "tcp_src->R1", acc, d["tcp_src-R1"], qcap, self._at_r1),
            ("R1", "tcp_src"): Link(sim, "R1->tcp_src", acc, d["tcp_src-R1"], qcap, self._at_sender),
            ("udp_src", "R1"): Link(sim, "udp_src->R1", acc, d["udp_src-R1"], qcap, self._udp_at_r1),
            ("R1", "R2"): Link(sim, "R1->R2", topo.bottleneck_bandwidth, d["R1-R2"], qcap, self._at_r2),
            ("R2", "R1"): Link(sim, "R2->R1", topo.bottleneck_bandwidth, d["R1-R2"], qcap, self._ack_at_r1),
            ("R2", "sink"): Link(sim, "R2->sink", acc, d["R2-sink"], qcap, self._at_sink),
            ("sink", "R2"): Link(sim, "sink->R2", acc, d["R2-sink"], qcap, self._ack_at_r2),
        }
        for link in self.links.values():
            link.on_drop = self._on_drop

        # steganographic roles per scenario
        self.sender_ctl = self.receiver_ctl = self.mb_ss = self.mb_sr = None
        self.steg_source = SteganogramSource(run.steg_data, self.rng["steg"])
        if run.rsteg:
            args = (self.sk, run.ir_p, self.steg_source, self.rng["mark"])
            kw = dict(embed_len=run.embed_len, marked=self.marked)
            if run.scenario == 1:
                self.sender_ctl = StegSenderCtl(*args, **kw)
                self.receiver_ctl = StegReceiverCtl(self.sk, run.mechanism, embed_len=run.embed_len)
            elif run.scenario == 2:
                self.sender_ctl = StegSenderCtl(*args, patch=True, **kw)
                self.mb_sr = MiddleboxSR(self.sk, embed_len=run.embed_len)
            elif run.scenario == 3:
                self.mb_ss = MiddleboxSS(*args, **kw)
                self.receiver_ctl = StegReceiverCtl(self.sk, run.mechanism, embed_len=run.embed_len)
            else:
                self.mb_ss = MiddleboxSS(*args, patch=True, **kw)
                self.mb_sr = MiddleboxSR(self.sk, embed_len=run.embed_len)
        self.steg_sender = self.sender_ctl or self.mb_ss
        self.steg_receiver = self.receiver_ctl or self.mb_sr

        self.warden = WardenStore(digest_mode=run.warden_digest) if topo.warden_tap else None
        self.tap_seen: set[int] = set()  # ground truth: seqs that crossed the tap
        self.carriers_at_tap = 0
        self.carrier_retrans_at_tap = 0

        app_rng = self.rng["payload"]
        addr = (ADDR["tcp_src"], ADDR["sink"], 5000, 80)
        if run.app_rate is None:
            inner = BulkSource(app_rng)
        else:
            inner = RateSource(app_rng, sim, int(round(SEC / run.app_rate)))
        self.source = _RecordingSource(inner, self.tcp_cfg.isn, self.checker.originals, run.transfer_bytes)
        self.sender = TcpSender(
            sim, self._from_sender, self.source, run.mechanism, self.tcp_cfg,
            addr=addr, steg=self.sender_ctl, is_intentional=self.marked.__contains__,
        )
        self.receiver = TcpReceiver(run.mechanism, self.tcp_cfg, steg=self.receiver_ctl)
        if run.app_rate is None:
            sim.schedule(0, lambda _: self.sender.start(), kind=EventKind.APP_SEND)
        else:
            inner.on_data = self.sender.try_send

        self._udp_seq = 0
        if topo.udp_rate > 0:
            self._udp_gap = topo.udp_packet_size * 8 * SEC / topo.udp_rate
            sim.schedule(int(self.rng["udp"].uniform(0, self._udp_gap)), self._udp_send, kind=EventKind.APP_SEND)

    def _draw_delays(self) -> dict[str, SimTime]:
        topo = self.topo
        rng = random.Random(f"{topo.seed}:delay")
        spread = topo.delay_spread
        out = {}
        for a, b in LINKS:
            nominal = topo.bottleneck_delay if (a, b) == ("R1", "R2") else topo.access_delay
            out[f"{a}-{b}"] = int(round(nominal * rng.uniform(1 - spread, 1 + spread))) if spread else nominal
        return out

    # -- bookkeeping -----------------------------------------------------------

    def _trace(self, kind: str, node: str, pkt) -> None:
        if isinstance(pkt, UdpPacket):
            self.trace.append(f"{self.sim.now} {kind} {node} udp seq={pkt.seq} len={pkt.size}")
            return
        m = pkt.meta
        tags = "".join(c for c, on in (("r", m.retransmission), ("c", m.steg_carrier), ("m", m.marked), ("x", m.corrupted)) if on) or "-"
        dig = hashlib.sha256(pkt.payload).hexdigest()[:16] if pkt.payload else "-"
        conn = f"{pkt.src}:{pkt.sport}>{pkt.dst}:{pkt.dport}"
        self.trace.append(
            f"{self.sim.now} {kind} {node} conn={conn} seq={pkt.seq} ack={pkt.ack} len={len(pkt.payload)} "
            f"flags={_flags(pkt)} sack={len(pkt.sack_blocks)} dig={dig} tags={tags}"
        )

    def _on_drop(self, link: Link, pkt) -> None:
        if isinstance(pkt, UdpPacket):
            self.counters["udp_drops"] += 1
        elif pkt.payload:
            self.counters["data_queue_drops"] += 1
        else:
            self.counters["ack_queue_drops"] += 1
        if self.trace is not None:
            self._trace("drop", link.name, pkt)

    def describe(self) -> str:
        s, r = self.sender, self.receiver
        return (
            f"sender snd_una={s.snd_una} snd_nxt={s.snd_nxt} snd_max={s.snd_max} cwnd={s.cwnd:.0f} "
            f"rto={s.rto:.0f} timer={'on' if s.timer_running else 'off'}; receiver rcv_nxt={r.rcv_nxt} "
            f"ooo={len(r.ooo)} holds={sorted(r.holds)}"
        )

    # -- packet path -----------------------------------------------------------

    def _udp_send(self, _=None):
        topo = self.topo
        self._udp_seq += 1
        self.counters["udp_sent"] += 1
        pkt = UdpPacket(topo.udp_packet_size, self._udp_seq)
        self.links[("udp_src", "R1")].transmit(pkt)
        j = topo.udp_jitter
        gap = self._udp_gap * (self.rng["udp"].uniform(1 - j, 1 + j) if j else 1.0)
        self.sim.schedule(self.sim.now + max(1, int(gap)), self._udp_send, kind=EventKind.APP_SEND)

    def _udp_at_r1(self, pkt):
        if self.trace is not None:
            self._trace("arrive", "R1", pkt)
        self.links[("R1", "R2")].transmit(pkt)

    def _from_sender(self, seg: Segment):
        self.counters["data_sent"] += 1
        seg = corrupt_maybe(seg, self.topo.p_corrupt, self.rng["corrupt"])
        if seg.meta.corrupted:
            self.counters["corrupted"] += 1
        if self.trace is not None:
            self._trace("send", "tcp_src", seg)
        self.links[("tcp_src", "R1")].transmit(seg)

    def _at_r1(self, seg: Segment):
        if self.trace is not None:
            self._trace("arrive", "R1", seg)
        if self.mb_ss is not None:
            seg = self.mb_ss.process(seg)
        if self._drop_marks and seg.meta.marked and not seg.meta.retransmission:
            self._drop_marks -= 1
            self.counters["injected_drops"] += 1
            return
        if self._drop_carriers and seg.meta.steg_carrier:
            self._drop_carriers -= 1
            self.counters["injected_drops"] += 1
            return
        if seg.payload:
            if seg.meta.steg_carrier:
                self.carriers_at_tap += 1
                if seg.seq in self.tap_seen:
                    self.carrier_retrans_at_tap += 1
            self.tap_seen.add(seg.seq)
        if self.trace is not None:
            self._trace("tap", "R1", seg)
        if self.warden is not None and self.warden.observe_data_segment(seg, self.sim.now, self.run_cfg.warden_window) is Verdict.DETECT_AND_DROP:
            self.counters["warden_drops"] += 1
            if self.trace is not None:
                self._trace("warden_drop", "R1", seg)
            return
        self.links[("R1", "R2")].transmit(seg)

    def _at_r2(self, pkt):
        if isinstance(pkt, UdpPacket):
            self.counters["udp_delivered"] += 1
            return
        if self.trace is not None:
            self._trace("arrive", "R2", pkt)
        if self.mb_sr is not None:
            out = self.mb_sr.process(pkt)
            if out is None:
                self.counters["middlebox_drops"] += 1
                if self.trace is not None:
                    self._trace("mb_drop", "R2", pkt)
                return
            pkt = out
        self.links[("R2", "sink")].transmit(pkt)

    def _at_sink(self, seg: Segment):
        if self.trace is not None:
            self._trace("arrive", "sink", seg)
        self.counters["data_arrived"] += 1
        if not checksum_ok(seg):
            self.counters["checksum_discards"] += 1
            return
        ack, delivered = self.receiver.on_data_receive(seg, self.sim.now)
        if delivered:
            self.checker.on_delivered(delivered)
        if ack is not None:
            self.links[("sink", "R2")].transmit(ack)

    def _ack_at_r2(self, ack: Segment):
        self.links[("R2", "R1")].transmit(ack)

    def _ack_at_r1(self, ack: Segment):
        if self.trace is not None:
            self._trace("tapack", "R1", ack)
        if self.warden is not None:
            self.warden.observe_ack(ack)
        if self.mb_ss is not None:
            self.mb_ss.observe_ack(ack)
        self.links[("R1", "tcp_src")].transmit(ack)

    def _at_sender(self, ack: Segment):
        if self.trace is not None:
            self._trace("arrive", "tcp_src", ack)
        if not checksum_ok(ack):
            self.counters["checksum_discards_ack"] += 1
            return
        self.sender.on_ack_receive(ack, self.sim.now)

    # -- measurement -----------------------------------------------------------

    def snapshot(self) -> dict:
        s = self.sender.stats
        snap = dict(self.counters)
        snap.update(
            segments_sent=s.data_sent,
            first_sent=s.first_sent,
            retrans_natural=s.retrans_natural,
            retrans_intentional=s.retrans_intentional,
            timeouts=s.timeouts,
            fast_retransmits=s.fast_retransmits,
            delivered_bytes=self.receiver.stats.delivered_bytes,
        )
        if self.steg_sender is not None:
            snap.update(marks=self.steg_sender.stats.marked, eligible=self.steg_sender.stats.eligible)
        if self.steg_receiver is not None:
            snap.update(n_s=self.steg_receiver.stats.carriers, steg_bits=self.steg_receiver.stats.bits)
        if self.warden is not None:
            w = self.warden
            snap.update(w_det=w.detections, w_tp=w.true_positives, w_fp=w.false_positives)
        return snap

    @property
    def bits_per_carrier(self) -> int:
        bits = self.run_cfg.mss * 8 - self.run_cfg.embed_len
        return bits - self.run_cfg.embed_len if self.run_cfg.scenario in (2, 4) else bits

    def anomalies(self) -> dict:
        out: Counter = Counter()
        for part in (self.steg_sender, self.steg_receiver):
            if part is not None:
                out.update(part.anomalies)
        return dict(out)

    def transfer_complete(self) -> bool:
        limit = self.run_cfg.transfer_bytes
        return limit is not None and self.receiver.stats.delivered_bytes >= limit

    def run_until_complete(self, deadline: SimTime, step: SimTime = SEC) -> bool:
        """Advance in ``step`` increments until the finite transfer is delivered or ``deadline`` passes."""
        while not self.transfer_complete() and self.sim.now < deadline:
            self.sim.run(min(self.sim.now + step, deadline))
        return self.transfer_complete()

    def in_flight_data(self) -> int:
        return sum(1 for ev in self.sim.pending() if isinstance(ev.arg, Segment) and ev.arg.payload)


def build_topology(cfg: TopologyConfig, run: RunConfig | None = None) -> Simulation:
    return Simulation(cfg, run)


def run_simulation(sim: Simulation, warmup: SimTime = 60 * SEC, measure: SimTime = 540 * SEC) -> RunMetrics:
    """Run through warmup + measure; counters cover the measurement window only."""
    if measure <= 0 or warmup < 0:
        raise ConfigError("measure must be > 0 and warmup >= 0")
    start = sim.sim.now
    marks: dict = {}

    def _open_window(_):
        marks.update(sim.snapshot())

    sim.sim.schedule(start + warmup, _open_window, kind=EventKind.CONTROL)
    sim.sim.run(start + warmup + measure)
    end = sim.snapshot()
    d = {k: end.get(k, 0) - marks.get(k, 0) for k in end}
    w = {}
    if sim.warden is not None:
        w = sim.warden.report()
        w.update(true_positives_window=d.get("w_tp", 0), false_positives_window=d.get("w_fp", 0))
    return RunMetrics(
        n_s=d.get("n_s", 0),
        s_s=sim.run_cfg.mss,
        t=measure / SEC,
        segments_sent=d["segments_sent"],
        retrans_natural=d["retrans_natural"],
        retrans_intentional=d["retrans_intentional"],
        steg_bits=d.get("steg_bits", 0),
        bits_per_carrier=sim.bits_per_carrier if sim.steg_receiver is not None else 0,
        marks=d.get("marks", 0),
        eligible=d.get("eligible", 0),
        first_sent=d["first_sent"],
        timeouts=d["timeouts"],
        fast_retransmits=d["fast_retransmits"],
        delivered_bytes=d["delivered_bytes"],
        queue_drops=d.get("data_queue_drops", 0),
        checksum_discards=d.get("checksum_discards", 0),
        udp_sent=d.get("udp_sent", 0),
        udp_drops=d.get("udp_drops", 0),
        warden=w,
        anomalies=sim.anomalies(),
    )
