"""RSTEG protocol roles: marking sender, retransmission-invoking receiver, and middleboxes.

Carrier layout: the StegMark IS at the scheduled offsets, message bits at every other
offset in ascending order. When the steganogram receiver is a middlebox that must
restore the original payload (scenarios 2 and 4), the first ``embed_len`` message
positions instead carry the user-data bits that the request mark overwrote.
"""

from __future__ import annotations

import enum
import random
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .steg_core import (
    DEFAULT_EMBED_LEN,
    ControlBit,
    PositionSchedule,
    StegKey,
    compute_is,
    detect_mark,
    embed_is,
    mask_payload,
    position_schedule,
    read_bits,
    write_bits,
)
from .tcp_engine import Mechanism, Segment, TcpReceiver, tcp_checksum


class Phase(enum.Enum):
    MARK_SENT = "MarkSent"
    STEG_SENT = "StegSent"
    RECOVERY_USER_DATA = "RecoveryUserData"
    RECOVERY_STEG = "RecoverySteg"


# Alternation after a mark: which payload the next retransmission carries.
_NEXT_PHASE = {
    Phase.MARK_SENT: Phase.STEG_SENT,
    Phase.STEG_SENT: Phase.RECOVERY_USER_DATA,
    Phase.RECOVERY_USER_DATA: Phase.RECOVERY_STEG,
    Phase.RECOVERY_STEG: Phase.RECOVERY_USER_DATA,
}
_CARRIER_PHASES = (Phase.STEG_SENT, Phase.RECOVERY_STEG)


class Role(enum.Enum):
    ENDPOINT_SS = "EndpointSS"
    ENDPOINT_SR = "EndpointSR"
    MIDDLEBOX_SS = "MiddleboxSS"
    MIDDLEBOX_SR = "MiddleboxSR"


class RstegProtocolError(RuntimeError):
    pass


class Marker:
    """Marks segments and recognises marks for one steg key."""

    def __init__(self, sk: StegKey, embed_len: int = DEFAULT_EMBED_LEN):
        self.sk = sk
        self.embed_len = embed_len

    def schedule(self, seq: int, nbytes: int) -> PositionSchedule:
        return position_schedule(self.sk, seq, nbytes * 8, self.embed_len)

    def masked_checksum(self, seg: Segment, sched: PositionSchedule, payload: bytes | None = None) -> int:
        return tcp_checksum(seg, mask_payload(seg.payload if payload is None else payload, sched))

    def mark(self, seg: Segment, cb: ControlBit, payload: bytes | None = None) -> Segment:
        """Copy of ``seg`` carrying ``payload`` (default: its own) with the IS for ``cb`` embedded."""
        payload = seg.payload if payload is None else payload
        sched = self.schedule(seg.seq, len(payload))
        is_ = compute_is(self.sk, seg.seq, self.masked_checksum(seg, sched, payload), cb, self.embed_len)
        out = seg.copy(payload=embed_is(payload, is_, sched))
        out.checksum = tcp_checksum(out)
        return out

    def inspect(self, seg: Segment, anomalies: Counter | None = None) -> tuple[ControlBit | None, PositionSchedule | None]:
        if len(seg.payload) * 8 < self.embed_len:
            return None, None
        sched = self.schedule(seg.seq, len(seg.payload))
        cb = detect_mark(seg.payload, self.sk, seg.seq, self.masked_checksum(seg, sched), self.embed_len, anomalies, sched)
        return cb, sched

    def carrier_capacity(self, nbytes: int) -> int:
        return nbytes * 8 - self.embed_len

    def build_carrier(self, seg: Segment, bits: np.ndarray) -> Segment:
        sched = self.schedule(seg.seq, len(seg.payload))
        free = sched.free_offsets()
        if len(bits) != len(free):
            raise RstegProtocolError(f"carrier needs {len(free)} bits, got {len(bits)}")
        body = write_bits(bytes(len(seg.payload)), free, bits)
        return self.mark(seg, ControlBit.STEG, body)


def extract_steganogram(payload: bytes, sched: PositionSchedule) -> np.ndarray:
    """Payload bits outside the IS positions, ascending offset order."""
    return read_bits(payload, sched.free_offsets())


class SteganogramSource:
    """Outgoing covert bit queue. Finite data is zero-padded once exhausted."""

    def __init__(self, data: bytes | None = None, rng: random.Random | None = None):
        self._bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8)) if data is not None else None
        self._rng = rng or random.Random(0)
        self._pos = 0
        self.sent: list[np.ndarray] = []

    @property
    def finite(self) -> bool:
        return self._bits is not None

    def remaining(self) -> int | None:
        return None if self._bits is None else len(self._bits) - self._pos

    def exhausted(self) -> bool:
        return self._bits is not None and self._pos >= len(self._bits)

    def take(self, n: int) -> np.ndarray:
        if self._bits is None:
            chunk = np.unpackbits(np.frombuffer(self._rng.randbytes((n + 7) // 8), dtype=np.uint8))[:n]
        else:
            chunk = self._bits[self._pos : self._pos + n]
            if len(chunk) < n:
                chunk = np.concatenate([chunk, np.zeros(n - len(chunk), dtype=np.uint8)])
        self._pos += n
        self.sent.append(chunk)
        return chunk

    def sent_bits(self) -> np.ndarray:
        return np.concatenate(self.sent) if self.sent else np.zeros(0, dtype=np.uint8)


@dataclass
class SenderCtlStats:
    eligible: int = 0
    marked: int = 0
    carriers_sent: int = 0
    user_data_recoveries: int = 0
    resolved: int = 0

    def reset(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, 0)


class StegSenderCtl:
    """Steganogram sender: Bernoulli marking and the carrier / user-data alternation.

    Used directly by a TCP sender (endpoint SS) and wrapped by ``MiddleboxSS``.
    At most one marked sequence number is unresolved at a time.
    """

    role = Role.ENDPOINT_SS

    def __init__(
        self,
        sk: StegKey,
        ir_p: float,
        source: SteganogramSource,
        rng: random.Random,
        *,
        embed_len: int = DEFAULT_EMBED_LEN,
        patch: bool = False,
        marked: set | None = None,
    ):
        if not 0.0 <= ir_p <= 1.0:
            raise ValueError(f"ir_p must be a fraction in [0, 1], got {ir_p}")
        self.marker = Marker(sk, embed_len)
        self.ir_p = ir_p
        self.source = source
        self.rng = rng
        self.patch = patch
        self.marked = marked if marked is not None else set()
        self.phase_map: dict[int, Phase] = {}
        self.history: dict[int, list[Phase]] = {}
        self._originals: dict[int, bytes] = {}
        self._marked_payload: dict[int, bytes] = {}
        self._lengths: dict[int, int] = {}
        self._bits: dict[int, np.ndarray] = {}
        self.anomalies: Counter = Counter()
        self.stats = SenderCtlStats()

    def maybe_mark(self, seg: Segment) -> Segment:
        if self.phase_map or not seg.payload or self.source.exhausted():
            return seg
        if len(seg.payload) * 8 < self.marker.embed_len * (2 if self.patch else 1) + 1:
            return seg
        self.stats.eligible += 1
        if self.rng.random() >= self.ir_p:
            return seg
        out = self.marker.mark(seg, ControlBit.REQUEST)
        out.meta.marked = True
        seq = seg.seq
        self.phase_map[seq] = Phase.MARK_SENT
        self.history[seq] = [Phase.MARK_SENT]
        self._originals[seq] = seg.payload
        self._marked_payload[seq] = out.payload
        self._lengths[seq] = len(seg.payload)
        self.marked.add(seq)
        self.stats.marked += 1
        return out

    def payload_for_retransmit(self, seq: int, recorded: bytes, seg: Segment) -> tuple[bytes, bool]:
        """Payload for a retransmission of ``seq`` and whether it is a steganogram carrier."""
        phase = self.phase_map.get(seq)
        if phase is None:
            return recorded, False
        if len(seg.payload) != self._lengths[seq]:
            raise RstegProtocolError(f"retransmission of marked seq {seq} changed length")
        phase = _NEXT_PHASE[phase]
        self.phase_map[seq] = phase
        self.history[seq].append(phase)
        if phase in _CARRIER_PHASES:
            self.stats.carriers_sent += 1
            return self._carrier(seq, seg).payload, True
        self.stats.user_data_recoveries += 1
        return self._marked_payload[seq], False

    def _carrier(self, seq: int, seg: Segment) -> Segment:
        template = seg.copy(payload=self._originals[seq])
        bits = self._bits.get(seq)
        if bits is None:
            capacity = self.marker.carrier_capacity(len(template.payload))
            if self.patch:
                capacity -= self.marker.embed_len
            bits = self.source.take(capacity)
            self._bits[seq] = bits
        if self.patch:
            sched = self.marker.schedule(seq, len(template.payload))
            bits = np.concatenate([read_bits(self._originals[seq], sched.offsets), bits])
        return self.marker.build_carrier(template, bits)

    def on_ack(self, ack: int) -> None:
        for seq in [s for s in self.phase_map if s + self._lengths[s] <= ack]:
            del self.phase_map[seq]
            for store in (self._originals, self._marked_payload, self._lengths, self._bits):
                store.pop(seq, None)
            self.stats.resolved += 1

    def outstanding(self) -> int | None:
        return next(iter(self.phase_map), None)


@dataclass
class ReceiverCtlStats:
    marks_seen: int = 0
    carriers: int = 0
    bits: int = 0
    unexpected: int = 0
    mark_repeats: int = 0

    def reset(self):
        for name in self.__dataclass_fields__:
            setattr(self, name, 0)


class _Extractor:
    """Shared steganogram-receiver bookkeeping."""

    def __init__(self, sk: StegKey, embed_len: int, patch: bool):
        self.marker = Marker(sk, embed_len)
        self.patch = patch
        self.extracted: list[np.ndarray] = []
        self.extracted_seqs: set[int] = set()
        self.anomalies: Counter = Counter()
        self.stats = ReceiverCtlStats()

    def _extract(self, seq: int, payload: bytes, sched: PositionSchedule) -> np.ndarray | None:
        """Append the carrier's message bits once per seq; returns the patch bits if any."""
        bits = extract_steganogram(payload, sched)
        patch = None
        if self.patch:
            patch, bits = bits[: self.marker.embed_len], bits[self.marker.embed_len :]
        if seq in self.extracted_seqs:
            self.anomalies["duplicate_carrier"] += 1
            return patch
        self.extracted_seqs.add(seq)
        self.extracted.append(bits)
        self.stats.carriers += 1
        self.stats.bits += len(bits)
        return patch

    def extracted_bits(self) -> np.ndarray:
        return np.concatenate(self.extracted) if self.extracted else np.zeros(0, dtype=np.uint8)


class StegReceiverCtl(_Extractor):
    """Steganogram receiver living in the TCP receiver (scenarios 1 and 3).

    One acknowledgment policy serves every mechanism: the marked segment is never
    acknowledged, so the ACK number stays pinned at its seq. An RTO-only sender
    ignores the resulting duplicates and times out; FR/R and SACK senders react to them.
    """

    role = Role.ENDPOINT_SR

    def __init__(self, sk: StegKey, mechanism: Mechanism, *, embed_len: int = DEFAULT_EMBED_LEN):
        super().__init__(sk, embed_len, patch=False)
        self.mechanism = mechanism
        self.pending_marks: dict[int, int] = {}
        self.unexpected_steg: dict[int, bool] = {}

    def on_segment(self, receiver: TcpReceiver, seg: Segment) -> tuple[list, bool]:
        cb, sched = self.marker.inspect(seg, self.anomalies)
        if cb is ControlBit.STEG:
            return [], self.receiver_on_steg_segment(receiver, seg, sched)
        is_new = not receiver.has_data(seg.seq)
        delivered = receiver.accept(seg)
        if cb is ControlBit.REQUEST:
            return delivered, self.receiver_on_marked(seg.seq, len(seg.payload), is_new)
        return delivered, True

    def receiver_on_marked(self, seq: int, length: int, is_new: bool = True) -> bool:
        """Record a retransmission request. Returns whether an ACK may be sent."""
        self.stats.marks_seen += 1
        if seq in self.unexpected_steg:
            # steganogram already here, user data just arrived: both halves complete
            del self.unexpected_steg[seq]
            return True
        if seq in self.pending_marks:
            # user-data recovery after a lost carrier resends the marked payload
            self.stats.mark_repeats += 1
            return False
        if not is_new:
            return True
        self.pending_marks[seq] = length
        return False

    def receiver_on_steg_segment(self, receiver: TcpReceiver, seg: Segment, sched: PositionSchedule) -> bool:
        seq = seg.seq
        self._extract(seq, seg.payload, sched)
        if seq in self.pending_marks:
            del self.pending_marks[seq]
            return True
        if not receiver.has_data(seq):
            if seq not in self.unexpected_steg:
                self.stats.unexpected += 1
            self.unexpected_steg[seq] = True
            return False
        return True


class MiddleboxSS(StegSenderCtl):
    """Intermediate steganogram sender: marks passing first transmissions and rewrites
    retransmissions of the selected sequence number (scenarios 3 and 4)."""

    role = Role.MIDDLEBOX_SS

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.highest_end: int | None = None

    def process(self, seg: Segment) -> Segment | None:
        if not seg.payload:
            return seg
        if self.highest_end is None or seg.seq >= self.highest_end:
            self.highest_end = seg.end
            return self.maybe_mark(seg)
        if seg.seq not in self.phase_map:
            return seg
        if seg.payload != self._originals[seg.seq]:
            self.anomalies["retransmission_differs"] += 1
        payload, carrier = self.payload_for_retransmit(seg.seq, self._marked_payload[seg.seq], seg)
        out = seg.copy(payload=payload)
        out.checksum = tcp_checksum(out)
        out.meta.steg_carrier = carrier
        out.meta.intentional = True
        return out

    def observe_ack(self, ack_seg: Segment) -> None:
        self.on_ack(ack_seg.ack)


class MiddleboxSR(_Extractor):
    """Intermediate steganogram receiver: swallows marked segments, restores them when
    the carrier arrives (scenarios 2 and 4)."""

    role = Role.MIDDLEBOX_SR

    def __init__(self, sk: StegKey, *, embed_len: int = DEFAULT_EMBED_LEN):
        super().__init__(sk, embed_len, patch=True)
        self.stored_payloads: dict[int, bytes] = {}
        self.dropped = 0
        self.restored = 0

    def process(self, seg: Segment) -> Segment | None:
        if not seg.payload:
            return seg
        cb, sched = self.marker.inspect(seg, self.anomalies)
        if cb is None:
            return seg
        seq = seg.seq
        if cb is ControlBit.REQUEST:
            self.stored_payloads.setdefault(seq, seg.payload)
            self.dropped += 1
            return None
        stored = self.stored_payloads.pop(seq, None)
        if stored is None:
            # Carrier without a stored original cannot be restored; dropping it makes
            # the sender fall back to user data instead of corrupting the stream.
            self.anomalies["orphan_carrier"] += 1
            self._extract(seq, seg.payload, sched)
            self.dropped += 1
            return None
        patch = self._extract(seq, seg.payload, sched)
        out = seg.copy(payload=write_bits(stored, sched.offsets, patch))
        out.checksum = tcp_checksum(out)
        out.meta.steg_carrier = False
        self.restored += 1
        return out
