"""Passive warden: keeps every unacknowledged segment seen at its tap and drops
retransmissions whose payload differs from the stored original."""

from __future__ import annotations

import enum
import hashlib
import statistics
from collections import defaultdict
from dataclasses import dataclass, field

from .tcp_engine import Segment


class Verdict(enum.Enum):
    PASS = "pass"
    DETECT_AND_DROP = "detect_and_drop"


def payload_digest(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()[:8]


@dataclass
class ConnCounters:
    segments: int = 0
    retransmissions: int = 0


@dataclass
class WardenStore:
    """Per-connection map seq -> (payload or digest, length, first-seen time)."""

    digest_mode: bool = False
    entries: dict = field(default_factory=lambda: defaultdict(dict))
    detections: int = 0
    true_positives: int = 0
    false_positives: int = 0
    peak_entries: int = 0
    peak_bytes: int = 0
    stored_count: int = 0
    stored_bytes: int = 0
    counters: dict = field(default_factory=lambda: defaultdict(ConnCounters))
    window_counters: dict = field(default_factory=lambda: defaultdict(ConnCounters))
    detected_seqs: list = field(default_factory=list)

    def _key(self, payload: bytes) -> bytes:
        return payload_digest(payload) if self.digest_mode else payload

    def _record(self, conn, is_retransmission: bool, now: int, window: int | None):
        c = self.counters[conn]
        c.segments += 1
        c.retransmissions += is_retransmission
        if window:
            w = self.window_counters[(conn, now // window)]
            w.segments += 1
            w.retransmissions += is_retransmission

    def observe(self, conn, seq: int, length: int, key: bytes, is_carrier: bool, now: int = 0, window: int | None = None) -> Verdict:
        """Core comparison on an already-reduced payload key (payload bytes or digest)."""
        store = self.entries[conn]
        stored = store.get(seq)
        self._record(conn, stored is not None, now, window)
        if stored is None:
            store[seq] = (key, length, now)
            self.stored_count += 1
            self.stored_bytes += len(key)
            self.peak_entries = max(self.peak_entries, self.stored_count)
            self.peak_bytes = max(self.peak_bytes, self.stored_bytes)
            return Verdict.PASS
        if stored[0] == key:
            return Verdict.PASS
        self.detections += 1
        if is_carrier:
            self.true_positives += 1
        else:
            self.false_positives += 1
        self.detected_seqs.append((conn, seq, is_carrier))
        return Verdict.DETECT_AND_DROP

    def observe_data_segment(self, seg: Segment, now: int = 0, window: int | None = None) -> Verdict:
        if not seg.payload:
            return Verdict.PASS
        return self.observe(seg.conn_id, seg.seq, len(seg.payload), self._key(seg.payload), seg.meta.steg_carrier, now, window)

    def evict(self, conn, ack: int) -> int:
        self.peak_entries = max(self.peak_entries, self.stored_count)
        store = self.entries.get(conn)
        if not store:
            return 0
        gone = [seq for seq, (_, length, _) in store.items() if seq + length <= ack]
        for seq in gone:
            key = store.pop(seq)[0]
            self.stored_count -= 1
            self.stored_bytes -= len(key)
        return len(gone)

    def observe_ack(self, ack_seg: Segment) -> int:
        """Evict everything the ACK covers. ``ack_seg`` flows receiver -> sender."""
        conn = (ack_seg.dst, ack_seg.dport, ack_seg.src, ack_seg.sport)
        return self.evict(conn, ack_seg.ack)

    def stored_seqs(self, conn) -> set[int]:
        return set(self.entries.get(conn, {}))

    def report(self) -> dict:
        return {
            "detections": self.detections,
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "peak_entries": self.peak_entries,
            "peak_bytes": self.peak_bytes,
            "stored_entries": self.stored_count,
        }


def retrans_rate_monitor(counters: dict, factor: float = 2.0) -> dict:
    """Per-connection retransmission rate and whether it exceeds ``factor`` x the median of the others.

    Leaving the connection itself out keeps a single outlier from raising its own
    reference (with two connections the plain median sits halfway between them).
    ``counters`` maps connection -> ConnCounters (or a (segments, retransmissions) pair).
    """
    rates = {}
    for conn, c in counters.items():
        segs, rtx = (c.segments, c.retransmissions) if isinstance(c, ConnCounters) else c
        rates[conn] = rtx / segs if segs else 0.0
    if len(rates) < 2:
        return {conn: (rate, False) for conn, rate in rates.items()}
    out = {}
    for conn, rate in rates.items():
        others = statistics.median(r for c, r in rates.items() if c != conn)
        out[conn] = (rate, rate > factor * others)
    return out


def format_report(w: WardenStore, factor: float = 2.0) -> str:
    lines = ["[warden]"]
    for key, value in w.report().items():
        lines.append(f"{key} = {value}")
    for conn, (rate, flagged) in sorted(retrans_rate_monitor(dict(w.counters), factor).items(), key=lambda kv: str(kv[0])):
        lines.append(f"conn {_fmt_conn(conn)} retrans_rate = {rate:.6f} flagged = {int(flagged)}")
    return "\n".join(lines)


def _fmt_conn(conn) -> str:
    if isinstance(conn, tuple) and len(conn) == 4:
        src, sport, dst, dport = conn
        return f"{src}:{sport}>{dst}:{dport}"
    return str(conn)


class TraceFormatError(ValueError):
    pass


def _parse_trace_line(line: str, lineno: int) -> tuple[int, str, dict]:
    parts = line.split()
    try:
        now, kind = int(parts[0]), parts[1]
        fields = dict(p.split("=", 1) for p in parts[3:] if "=" in p)
    except (IndexError, ValueError) as exc:
        raise TraceFormatError(f"line {lineno}: cannot parse {line!r}") from exc
    return now, kind, fields


def _parse_conn(text: str) -> tuple[int, int, int, int]:
    a, b = text.split(">")
    src, sport = a.split(":")
    dst, dport = b.split(":")
    return int(src), int(sport), int(dst), int(dport)


def replay_trace(lines, window: int | None = None) -> WardenStore:
    """Feed the ``tap`` / ``tapack`` events of a simulation trace through a digest-mode warden.

    The trace only carries payload digests, so the comparison is digest-based; the
    ``c`` tag supplies the ground truth for the TP/FP split.
    """
    w = WardenStore(digest_mode=True)
    for lineno, raw in enumerate(lines, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        now, kind, f = _parse_trace_line(line, lineno)
        if kind not in ("tap", "tapack"):
            continue
        try:
            conn = _parse_conn(f["conn"])
            length = int(f["len"])
            if kind == "tapack":
                src, sport, dst, dport = conn
                w.evict((dst, dport, src, sport), int(f["ack"]))
            elif length:
                w.observe(conn, int(f["seq"]), length, bytes.fromhex(f["dig"]), "c" in f["tags"], now, window)
        except (KeyError, ValueError) as exc:
            raise TraceFormatError(f"line {lineno}: malformed {kind} event: {exc}") from exc
    return w
