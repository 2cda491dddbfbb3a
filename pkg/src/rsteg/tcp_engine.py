"""Userspace TCP data transfer: segment format, receiver, Reno sender with RTO, FR/R and SACK recovery.

All times are integer (or float) microseconds of simulated time. Connection setup is
assumed done; data flows one way, ACKs the other.
"""

from __future__ import annotations

import enum
import struct
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable, Protocol

import numpy as np

from .events import EventKind

SEC = 1_000_000  # microseconds
IP_HEADER = 20
TCP_BASE_HEADER = 20
MAX_SACK_BLOCKS = 4
PROTO_TCP = 6


class Mechanism(enum.Enum):
    RTO = "RTO"
    FRR = "FRR"
    SACK = "SACK"

    @classmethod
    def parse(cls, text: str) -> "Mechanism":
        key = text.strip().upper().replace("/", "").replace("_ONLY", "")
        try:
            return cls[key]
        except KeyError:
            raise ValueError(f"unknown mechanism {text!r}; expected one of RTO, FRR, SACK") from None


class Flags(enum.IntFlag):
    FIN = 0x01
    SYN = 0x02
    ACK = 0x10


class ProtocolViolation(RuntimeError):
    """An endpoint saw something a correct peer can never send. Indicates a simulator bug."""


@dataclass(slots=True)
class SegmentMeta:
    """Simulator-only ground truth. Never part of the wire image."""

    retransmission: bool = False
    steg_carrier: bool = False
    marked: bool = False
    intentional: bool = False
    corrupted: bool = False
    original_send_time: int = 0


@dataclass(slots=True)
class Segment:
    src: int
    dst: int
    sport: int
    dport: int
    seq: int
    ack: int = 0
    flags: Flags = Flags.ACK
    window: int = 65535
    checksum: int = 0
    sack_blocks: tuple = ()
    payload: bytes = b""
    meta: SegmentMeta = field(default_factory=SegmentMeta)

    @property
    def conn_id(self) -> tuple:
        return (self.src, self.sport, self.dst, self.dport)

    @property
    def length(self) -> int:
        return len(self.payload)

    @property
    def end(self) -> int:
        return self.seq + len(self.payload)

    def options(self) -> bytes:
        if not self.sack_blocks:
            return b""
        blocks = self.sack_blocks[:MAX_SACK_BLOCKS]
        body = b"".join(struct.pack("!II", left & 0xFFFFFFFF, right & 0xFFFFFFFF) for left, right in blocks)
        return b"\x01\x01" + bytes([5, 2 + len(body)]) + body  # NOP NOP SACK

    @property
    def size(self) -> int:
        """Bytes on the wire including the IP header."""
        opt = 0 if not self.sack_blocks else 4 + 8 * min(len(self.sack_blocks), MAX_SACK_BLOCKS)
        return IP_HEADER + TCP_BASE_HEADER + opt + len(self.payload)

    def header_bytes(self, checksum: int = 0) -> bytes:
        opts = self.options()
        offset = (TCP_BASE_HEADER + len(opts)) // 4
        return struct.pack(
            "!HHIIHHHH",
            self.sport,
            self.dport,
            self.seq & 0xFFFFFFFF,
            self.ack & 0xFFFFFFFF,
            (offset << 12) | int(self.flags),
            self.window,
            checksum,
            0,
        ) + opts

    def copy(self, **changes) -> "Segment":
        changes.setdefault("meta", replace(self.meta))
        return replace(self, **changes)


def word_sum(data: bytes) -> int:
    """Plain integer sum of big-endian 16-bit words (odd length zero-padded)."""
    if len(data) & 1:
        data = data + b"\x00"
    return int(np.frombuffer(data, dtype=">u2").sum(dtype=np.uint64))


def fold(total: int) -> int:
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def ones_sum(data: bytes) -> int:
    """Folded one's-complement sum of 16-bit words.

    2**16 == 1 (mod 0xFFFF), so the folded sum is the big-endian integer value mod
    0xFFFF, with 0xFFFF standing in for a nonzero multiple.
    """
    if len(data) & 1:
        data = data + b"\x00"
    n = int.from_bytes(data, "big")
    r = n % 0xFFFF
    return 0xFFFF if r == 0 and n else r


def internet_checksum(data: bytes) -> int:
    return ~ones_sum(data) & 0xFFFF


def tcp_checksum(seg: Segment, payload: bytes | None = None) -> int:
    """One's-complement checksum over pseudo-header, header (checksum zeroed) and payload."""
    if payload is None:
        payload = seg.payload
    header = seg.header_bytes(0)
    pseudo = struct.pack("!IIBBH", seg.src, seg.dst, 0, PROTO_TCP, len(header) + len(payload))
    return ~fold(ones_sum(pseudo + header) + ones_sum(payload)) & 0xFFFF


def checksum_ok(seg: Segment) -> bool:
    return tcp_checksum(seg) == seg.checksum


def seal(seg: Segment) -> Segment:
    seg.checksum = tcp_checksum(seg)
    return seg


@dataclass
class TcpConfig:
    mss: int = 1000
    rto_min: int = 1 * SEC
    rto_max: int = 60 * SEC
    rto_initial: int = 1 * SEC
    rwnd: int = 65535
    initial_cwnd: int = 2  # segments
    dupthresh: int = 3
    isn: int = 1


def update_rtt(srtt: float | None, rttvar: float, sample: float, rto_min: float = SEC, rto_max: float = 60 * SEC):
    """Standard smoothed RTT estimator. Returns (srtt, rttvar, rto)."""
    if sample <= 0:
        raise ValueError(f"RTT sample must be positive, got {sample}")
    if srtt is None:
        srtt, rttvar = float(sample), sample / 2
    else:
        rttvar = 0.75 * rttvar + 0.25 * abs(srtt - sample)
        srtt = 0.875 * srtt + 0.125 * sample
    rto = min(max(srtt + 4 * rttvar, rto_min), rto_max)
    return srtt, rttvar, rto


class Scheduler(Protocol):
    now: int

    def schedule(self, time: int, fn: Callable, arg=None, kind: EventKind = ...) -> None: ...


class SenderHooks(Protocol):
    """What the sender asks of a steganographic controller."""

    def maybe_mark(self, seg: Segment) -> Segment: ...

    def payload_for_retransmit(self, seq: int, original: bytes, seg: Segment) -> tuple[bytes, bool]: ...

    def on_ack(self, ack: int) -> None: ...


@dataclass(slots=True)
class TxRecord:
    seq: int
    payload: bytes  # first-transmission wire payload (marked if marked)
    length: int
    first_sent: int
    send_count: int = 1
    retransmitted: bool = False
    sacked: bool = False
    rexmit_epoch: int = -1


@dataclass
class AckActions:
    advanced: bool = False
    dupack: bool = False
    fast_retransmit: bool = False
    rtt_sample: float | None = None
    sacked_bytes: int = 0


@dataclass
class SenderStats:
    data_sent: int = 0
    first_sent: int = 0
    retrans_natural: int = 0
    retrans_intentional: int = 0
    timeouts: int = 0
    fast_retransmits: int = 0

    def reset(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, 0)


class BulkSource:
    """Saturating application: always has another MSS of data."""

    def __init__(self, rng):
        self._rng = rng

    def next_payload(self, n: int) -> bytes | None:
        return self._rng.randbytes(n)


class RateSource:
    """Application writing one MSS-sized block every ``interval`` microseconds."""

    def __init__(self, rng, sim: Scheduler, interval: int, on_data: Callable[[], None] | None = None):
        self._rng = rng
        self._sim = sim
        self.interval = interval
        self.backlog = 0
        self.on_data = on_data
        sim.schedule(sim.now, self._tick, kind=EventKind.APP_SEND)

    def _tick(self, _=None):
        self.backlog += 1
        self._sim.schedule(self._sim.now + self.interval, self._tick, kind=EventKind.APP_SEND)
        if self.on_data is not None:
            self.on_data()

    def next_payload(self, n: int) -> bytes | None:
        if self.backlog <= 0:
            return None
        self.backlog -= 1
        return self._rng.randbytes(n)


class TcpSender:
    """Reno sender. ``mechanism`` picks the loss recovery used besides the RTO timer.

    RTO: timeouts only, go-back-N after expiry. FRR: Reno fast retransmit / fast
    recovery on the third duplicate ACK. SACK: scoreboard-driven recovery using a
    pipe estimate, retransmitting only holes.
    """

    def __init__(
        self,
        sim: Scheduler,
        emit: Callable[[Segment], None],
        source,
        mechanism: Mechanism = Mechanism.FRR,
        cfg: TcpConfig | None = None,
        *,
        addr: tuple[int, int, int, int] = (0x0A000001, 0x0A000003, 5000, 80),
        steg: SenderHooks | None = None,
        is_intentional: Callable[[int], bool] | None = None,
    ):
        self.sim = sim
        self.emit = emit
        self.source = source
        self.mechanism = mechanism
        self.cfg = cfg or TcpConfig()
        self.src, self.dst, self.sport, self.dport = addr
        self.steg = steg
        self.is_intentional = is_intentional or (lambda seq: False)
        self.stats = SenderStats()

        mss = self.cfg.mss
        self.snd_una = self.snd_nxt = self.snd_max = self.cfg.isn
        self.cwnd = float(self.cfg.initial_cwnd * mss)
        self.ssthresh = float(self.cfg.rwnd)
        self.srtt: float | None = None
        self.rttvar = 0.0
        self.rto = float(self.cfg.rto_initial)
        self.rto_backoff_count = 0
        self.queue: OrderedDict[int, TxRecord] = OrderedDict()
        self.dupack_count = 0
        self.in_recovery = False
        self.recover = 0
        self.timeout_recover = 0
        self.epoch = 0
        self.highest_sacked = self.cfg.isn
        self._timed: tuple[int, int] | None = None  # (seq, send time)
        self._deadline: int | None = None
        self._timer_at: int | None = None
        self._timer_token = 0

    # -- helpers ---------------------------------------------------------------

    @property
    def flight(self) -> int:
        return self.snd_max - self.snd_una

    @property
    def sack_scoreboard(self) -> list[tuple[int, int]]:
        return [(r.seq, r.seq + r.length) for r in self.queue.values() if r.sacked]

    def _segment(self, seq: int, payload: bytes) -> Segment:
        seg = Segment(self.src, self.dst, self.sport, self.dport, seq, 1, Flags.ACK, self.cfg.rwnd, 0, (), payload)
        seg.checksum = tcp_checksum(seg)
        return seg

    def start(self):
        self.try_send()

    # -- timer -----------------------------------------------------------------

    def _arm_timer(self):
        deadline = int(self.sim.now + self.rto)
        self._deadline = deadline
        if self._timer_at is None or self._timer_at > deadline:
            self._timer_token += 1
            self._timer_at = deadline
            self.sim.schedule(deadline, self._timer_fire, self._timer_token, kind=EventKind.TIMER_EXPIRY)

    def _stop_timer(self):
        self._deadline = None

    def _timer_fire(self, token):
        if token != self._timer_token:
            return
        self._timer_at = None
        if self._deadline is None:
            return
        if self._deadline > self.sim.now:
            self._timer_token += 1
            self._timer_at = self._deadline
            self.sim.schedule(self._deadline, self._timer_fire, self._timer_token, kind=EventKind.TIMER_EXPIRY)
            return
        self._deadline = None
        self.on_rto_expiry(self.sim.now)

    @property
    def timer_running(self) -> bool:
        return self._deadline is not None

    # -- transmission ----------------------------------------------------------

    def _send_new(self, payload: bytes):
        seq = self.snd_max
        seg = self._segment(seq, payload)
        seg.meta.original_send_time = self.sim.now
        if self.steg is not None:
            seg = self.steg.maybe_mark(seg)
        self.queue[seq] = TxRecord(seq, seg.payload, len(payload), self.sim.now)
        self.snd_max += len(payload)
        self.snd_nxt = self.snd_max
        if self._timed is None:
            self._timed = (seq, self.sim.now)
        self.stats.data_sent += 1
        self.stats.first_sent += 1
        if not self.timer_running:
            self._arm_timer()
        self.emit(seg)

    def _retransmit(self, rec: TxRecord):
        if self.steg is not None:
            payload, carrier = self.steg.payload_for_retransmit(rec.seq, rec.payload, self._segment(rec.seq, rec.payload))
        else:
            payload, carrier = rec.payload, False
        seg = self._segment(rec.seq, payload)
        intentional = self.is_intentional(rec.seq)
        seg.meta.retransmission = True
        seg.meta.steg_carrier = carrier
        seg.meta.intentional = intentional
        seg.meta.original_send_time = rec.first_sent
        rec.send_count += 1
        rec.retransmitted = True
        self._timed = None  # Karn: never time across a retransmission
        self.stats.data_sent += 1
        if intentional:
            self.stats.retrans_intentional += 1
        else:
            self.stats.retrans_natural += 1
        if not self.timer_running:
            self._arm_timer()
        self.emit(seg)

    def try_send(self):
        if self.mechanism is Mechanism.SACK and self.in_recovery:
            self._sack_recovery_send()
            return
        mss = self.cfg.mss
        while True:
            wnd = min(self.cwnd, self.cfg.rwnd)
            if self.snd_nxt < self.snd_max:  # go-back-N after a timeout
                rec = self.queue[self.snd_nxt]
                if rec.sacked:
                    self.snd_nxt += rec.length
                    continue
                if self.snd_nxt - self.snd_una + rec.length > wnd:
                    return
                self.snd_nxt += rec.length
                self._retransmit(rec)
                continue
            if self.snd_max - self.snd_una + mss > wnd:
                return
            payload = self.source.next_payload(mss)
            if payload is None:
                return
            self._send_new(payload)

    # -- SACK ------------------------------------------------------------------

    def _update_scoreboard(self, blocks) -> int:
        newly = 0
        for left, right in blocks:
            if right <= self.snd_una:
                continue
            if right > self.snd_max:
                raise ProtocolViolation(f"SACK block {left}-{right} beyond snd_max {self.snd_max}")
            for rec in self.queue.values():
                if rec.seq >= right:
                    break
                if not rec.sacked and rec.seq >= left and rec.seq + rec.length <= right:
                    rec.sacked = True
                    newly += rec.length
            self.highest_sacked = max(self.highest_sacked, right)
        return newly

    def select_retransmit_sack(self) -> list[tuple[int, int]]:
        """Unacknowledged, un-SACKed ranges below the highest SACKed byte, oldest first."""
        if self.highest_sacked <= self.snd_una:
            first = next(iter(self.queue.values()), None)
            return [] if first is None else [(first.seq, first.seq + first.length)]
        ranges: list[tuple[int, int]] = []
        for rec in self.queue.values():
            if rec.seq + rec.length > self.highest_sacked:
                break
            if rec.sacked:
                continue
            if ranges and ranges[-1][1] == rec.seq:
                ranges[-1] = (ranges[-1][0], rec.seq + rec.length)
            else:
                ranges.append((rec.seq, rec.seq + rec.length))
        return ranges

    def _lost_seqs(self) -> set[int]:
        """Un-SACKed segments with at least ``dupthresh`` segments' worth of SACKed data above them."""
        need = self.cfg.dupthresh * self.cfg.mss
        above = 0
        lost = set()
        for rec in reversed(self.queue.values()):
            if rec.sacked:
                above += rec.length
            elif above >= need:
                lost.add(rec.seq)
        return lost

    def _pipe(self, lost: set[int] | None = None) -> int:
        lost = self._lost_seqs() if lost is None else lost
        pipe = 0
        for rec in self.queue.values():
            if rec.sacked:
                continue
            if rec.seq not in lost:
                pipe += rec.length
            if rec.rexmit_epoch == self.epoch:
                pipe += rec.length
        return pipe

    def _next_hole(self, lost: set[int] | None = None) -> TxRecord | None:
        lost = self._lost_seqs() if lost is None else lost
        for rec in self.queue.values():
            if rec.seq in lost and rec.rexmit_epoch != self.epoch:
                return rec
        return None

    def _sack_recovery_send(self):
        mss = self.cfg.mss
        while True:
            lost = self._lost_seqs()
            pipe = self._pipe(lost)
            rec = self._next_hole(lost)
            need = rec.length if rec is not None else mss
            if pipe + need > self.cwnd:
                return
            if rec is not None:
                rec.rexmit_epoch = self.epoch
                self._retransmit(rec)
                continue
            if self.snd_max - self.snd_una + mss > self.cfg.rwnd:
                return
            payload = self.source.next_payload(mss)
            if payload is None:
                return
            self._send_new(payload)

    # -- events ----------------------------------------------------------------

    def on_ack_receive(self, ack_seg: Segment, now: int | None = None) -> AckActions:
        if not ack_seg.flags & Flags.ACK:
            raise ProtocolViolation("segment without ACK flag delivered to sender")
        ack = ack_seg.ack
        if ack > self.snd_max:
            raise ProtocolViolation(f"ACK {ack} above snd_max {self.snd_max}")
        now = self.sim.now if now is None else now
        mss = self.cfg.mss
        actions = AckActions()
        if self.mechanism is Mechanism.SACK and ack_seg.sack_blocks:
            actions.sacked_bytes = self._update_scoreboard(ack_seg.sack_blocks)

        if ack > self.snd_una:
            actions.advanced = True
            while self.queue:
                seq, rec = next(iter(self.queue.items()))
                if seq + rec.length > ack:
                    break
                self.queue.popitem(last=False)
            self.snd_una = ack
            self.snd_nxt = max(self.snd_nxt, ack)
            if self._timed is not None and ack > self._timed[0]:
                sample = now - self._timed[1]
                self._timed = None
                if sample > 0:
                    self.srtt, self.rttvar, self.rto = update_rtt(
                        self.srtt, self.rttvar, sample, self.cfg.rto_min, self.cfg.rto_max
                    )
                    actions.rtt_sample = sample
            self.rto_backoff_count = 0
            self.dupack_count = 0
            if self.steg is not None:
                self.steg.on_ack(ack)
            if self.in_recovery:
                if self.mechanism is Mechanism.SACK and ack < self.recover:
                    pass  # partial ACK: stay in recovery, holes refilled below
                else:
                    self.in_recovery = False
                    self.cwnd = self.ssthresh
            elif self.cwnd < self.ssthresh:
                self.cwnd += mss
            else:
                self.cwnd += mss * mss / self.cwnd
            if self.snd_una < self.snd_max:
                self._arm_timer()
            else:
                self._stop_timer()
            self.try_send()
            return actions

        if ack == self.snd_una and self.snd_max > self.snd_una and not ack_seg.payload:
            actions.dupack = True
            self.dupack_count += 1
            if self.mechanism is Mechanism.RTO:
                return actions
            if self.in_recovery:
                if self.mechanism is Mechanism.FRR:
                    self.cwnd += mss
                self.try_send()
                return actions
            # dupacks for a window already resent by go-back-N after a timeout do not trigger FR
            if self.dupack_count == self.cfg.dupthresh and self.snd_una >= self.timeout_recover:
                actions.fast_retransmit = True
                self._enter_recovery()
        return actions

    def _enter_recovery(self):
        mss = self.cfg.mss
        self.stats.fast_retransmits += 1
        self.ssthresh = max(self.flight / 2, 2 * mss)
        self.recover = self.snd_max
        self.in_recovery = True
        self.epoch += 1
        first = self.queue[self.snd_una]
        if self.mechanism is Mechanism.FRR:
            self._retransmit(first)
            self.cwnd = self.ssthresh + self.cfg.dupthresh * mss
            self.try_send()
            return
        self.cwnd = self.ssthresh
        ranges = self.select_retransmit_sack()
        rec = self.queue[ranges[0][0]] if ranges else first
        rec.rexmit_epoch = self.epoch
        self._retransmit(rec)
        self._sack_recovery_send()

    def on_rto_expiry(self, now: int | None = None):
        if self.snd_una >= self.snd_max:
            return
        mss = self.cfg.mss
        self.stats.timeouts += 1
        self.rto = min(2 * self.rto, self.cfg.rto_max)
        self.rto_backoff_count += 1
        self.ssthresh = max(self.flight / 2, 2 * mss)
        self.cwnd = float(mss)
        self.in_recovery = False
        self.timeout_recover = self.snd_max
        self.dupack_count = 0
        self.epoch += 1
        rec = self.queue[self.snd_una]
        self.snd_nxt = self.snd_una + rec.length
        self._retransmit(rec)
        self._arm_timer()
        self.try_send()


@dataclass
class ReceiverStats:
    segments: int = 0
    delivered_bytes: int = 0
    acks_sent: int = 0
    acks_suppressed: int = 0

    def reset(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, 0)


class ReceiverHooks(Protocol):
    def on_segment(self, receiver: "TcpReceiver", seg: Segment) -> tuple[list, bool]: ...


class TcpReceiver:
    """Cumulative-ACK receiver, one ACK per data segment, SACK blocks in SACK mode.

    A steganographic controller may pin the advertised ACK number below
    ``rcv_nxt`` (``holds``) or suppress individual ACKs.
    """

    def __init__(self, mechanism: Mechanism = Mechanism.FRR, cfg: TcpConfig | None = None, *, steg=None):
        self.mechanism = mechanism
        self.cfg = cfg or TcpConfig()
        self.rcv_nxt = self.cfg.isn
        self.ooo: dict[int, bytes] = {}
        # seq -> length: received but deliberately not acknowledged; owned by the steg controller
        self.holds: dict[int, int] = getattr(steg, "pending_marks", {})
        self.steg = steg
        self.stats = ReceiverStats()
        self._last_seq: int | None = None

    def has_data(self, seq: int) -> bool:
        return seq < self.rcv_nxt or seq in self.ooo

    @property
    def ack_number(self) -> int:
        if self.holds:
            return min(self.rcv_nxt, min(self.holds))
        return self.rcv_nxt

    def accept(self, seg: Segment) -> list[tuple[int, bytes]]:
        """Buffer or deliver the payload. Returns newly delivered in-order (seq, payload) pieces."""
        seq, payload = seg.seq, seg.payload
        if not payload or seq + len(payload) <= self.rcv_nxt:
            return []
        if seq < self.rcv_nxt:  # partial overlap
            payload = payload[self.rcv_nxt - seq :]
            seq = self.rcv_nxt
        if seq > self.rcv_nxt:
            self.ooo.setdefault(seq, payload)
            return []
        delivered = [(seq, payload)]
        self.rcv_nxt += len(payload)
        while self.rcv_nxt in self.ooo:
            chunk = self.ooo.pop(self.rcv_nxt)
            delivered.append((self.rcv_nxt, chunk))
            self.rcv_nxt += len(chunk)
        for s in [s for s in self.ooo if s < self.rcv_nxt]:
            del self.ooo[s]
        self.stats.delivered_bytes += sum(len(p) for _, p in delivered)
        return delivered

    def sack_blocks(self) -> tuple:
        """Received ranges above the ACK number, held segments excluded; newest first."""
        ack = self.ack_number
        ranges = [(ack, self.rcv_nxt)] if self.rcv_nxt > ack else []
        ranges += [(s, s + len(p)) for s, p in sorted(self.ooo.items())]
        for hseq, hlen in self.holds.items():
            cut = []
            for left, right in ranges:
                if hseq + hlen <= left or hseq >= right:
                    cut.append((left, right))
                    continue
                if left < hseq:
                    cut.append((left, hseq))
                if hseq + hlen < right:
                    cut.append((hseq + hlen, right))
            ranges = cut
        spans: list[tuple[int, int]] = []
        for left, right in sorted(ranges):
            if spans and spans[-1][1] == left:
                spans[-1] = (spans[-1][0], right)
            else:
                spans.append((left, right))
        if not spans:
            return ()
        last = self._last_seq
        spans.sort(key=lambda sp: (not (last is not None and sp[0] <= last < sp[1]), sp[0]))
        return tuple(spans[:MAX_SACK_BLOCKS])

    def make_ack(self, data_seg: Segment) -> Segment:
        blocks = self.sack_blocks() if self.mechanism is Mechanism.SACK else ()
        ack = Segment(
            data_seg.dst, data_seg.src, data_seg.dport, data_seg.sport, 1, self.ack_number,
            Flags.ACK, self.cfg.rwnd, 0, blocks, b"",
        )
        ack.checksum = tcp_checksum(ack)
        return ack

    def on_data_receive(self, seg: Segment, now: int = 0) -> tuple[Segment | None, list[tuple[int, bytes]]]:
        """Process one checksum-valid data segment. Returns (ACK to emit or None, delivered pieces)."""
        self.stats.segments += 1
        self._last_seq = seg.seq
        if self.steg is not None:
            delivered, send_ack = self.steg.on_segment(self, seg)
        else:
            delivered, send_ack = self.accept(seg), True
        if not send_ack:
            self.stats.acks_suppressed += 1
            return None, delivered
        self.stats.acks_sent += 1
        return self.make_ack(seg), delivered
