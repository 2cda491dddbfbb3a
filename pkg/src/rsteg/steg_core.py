"""Identifying Sequence marking: keyed hash, bit-position schedule, embed and detect.

A marked payload carries the first ``embed_len`` bits of

    SHA-256(key || seq (4 bytes BE) || masked checksum (2 bytes BE) || control bit (1 byte))

at bit offsets chosen by a keyed pseudorandom stream. Bits are numbered MSB-first
within each byte, byte 0 first.
"""

from __future__ import annotations

import enum
import hashlib
from collections import Counter
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DIGEST_BITS = 256
DEFAULT_EMBED_LEN = 128
MIN_KEY_BYTES = 16

_SCHEDULE_TAG = b"rsteg/schedule/v1"


class ScheduleError(ValueError):
    """Raised when a position schedule cannot be built or applied."""


class ControlBit(enum.IntEnum):
    REQUEST = 0  # retransmission request mark
    STEG = 1  # steganogram carrier


@dataclass(frozen=True)
class StegKey:
    key: bytes

    def __post_init__(self):
        if len(self.key) < MIN_KEY_BYTES:
            raise ValueError(f"steg key must be at least {MIN_KEY_BYTES} bytes, got {len(self.key)}")

    @classmethod
    def from_seed(cls, seed: int | str) -> "StegKey":
        return cls(hashlib.sha256(f"rsteg-key:{seed}".encode()).digest())


@dataclass(frozen=True)
class IdentifyingSequence:
    digest: bytes
    embed_len: int = DEFAULT_EMBED_LEN

    def __post_init__(self):
        if len(self.digest) * 8 != DIGEST_BITS:
            raise ValueError("digest must be 256 bits")
        if not 1 <= self.embed_len <= DIGEST_BITS:
            raise ValueError(f"embed_len must be in [1, {DIGEST_BITS}]")

    def bits(self) -> np.ndarray:
        """The embedded prefix as a uint8 array of 0/1 values."""
        return _digest_bits(self.digest)[: self.embed_len]


@dataclass(frozen=True, eq=False)
class PositionSchedule:
    offsets: np.ndarray  # int64 bit offsets, schedule order
    payload_len_bits: int

    def __len__(self):
        return len(self.offsets)

    def __eq__(self, other):
        if not isinstance(other, PositionSchedule):
            return NotImplemented
        return self.payload_len_bits == other.payload_len_bits and np.array_equal(self.offsets, other.offsets)

    def __hash__(self):
        return hash((self.payload_len_bits, self.offsets.tobytes()))

    def free_offsets(self) -> np.ndarray:
        """Offsets not used by the schedule, ascending."""
        mask = np.ones(self.payload_len_bits, dtype=bool)
        mask[self.offsets] = False
        return np.flatnonzero(mask)


def _digest_bits(digest: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(digest, dtype=np.uint8))


def _prefix_bytes(is_: IdentifyingSequence) -> bytes:
    """The embedded prefix packed MSB-first, trailing pad bits zero."""
    full, rest = divmod(is_.embed_len, 8)
    out = is_.digest[:full]
    if rest:
        out += bytes([is_.digest[full] & (0xFF << (8 - rest)) & 0xFF])
    return out


def compute_is(sk: StegKey, seq: int, checksum: int, cb: ControlBit, embed_len: int = DEFAULT_EMBED_LEN) -> IdentifyingSequence:
    data = sk.key + (seq & 0xFFFFFFFF).to_bytes(4, "big") + (checksum & 0xFFFF).to_bytes(2, "big") + bytes([int(cb)])
    return IdentifyingSequence(hashlib.sha256(data).digest(), embed_len)


@lru_cache(maxsize=4096)
def _schedule(key: bytes, seq: int, n: int, embed_len: int) -> np.ndarray:
    limit = (1 << 32) // n * n  # rejection bound for unbiased reduction
    nwords = max(2 * embed_len, 64)
    seed = _SCHEDULE_TAG + key + (seq & 0xFFFFFFFF).to_bytes(4, "big")
    while True:
        words = np.frombuffer(hashlib.shake_256(seed).digest(4 * nwords), dtype=">u4").tolist()
        seen: dict[int, None] = {}
        for w in words:
            if w < limit:
                seen.setdefault(w % n)
                if len(seen) == embed_len:
                    offsets = np.fromiter(seen, dtype=np.int64, count=embed_len)
                    offsets.setflags(write=False)
                    return offsets
        nwords *= 2


def position_schedule(sk: StegKey, seq: int, payload_len_bits: int, embed_len: int = DEFAULT_EMBED_LEN) -> PositionSchedule:
    """First ``embed_len`` distinct offsets drawn from SHAKE-256 keyed by (key, seq).

    Schedules for a smaller ``embed_len`` are prefixes of larger ones.
    """
    if embed_len < 1 or embed_len > payload_len_bits:
        raise ScheduleError(f"cannot schedule {embed_len} bits into a {payload_len_bits}-bit payload")
    return PositionSchedule(_schedule(sk.key, seq, payload_len_bits, embed_len), payload_len_bits)


def _check(payload: bytes, sched: PositionSchedule) -> None:
    if len(payload) * 8 != sched.payload_len_bits:
        raise ScheduleError(f"schedule built for {sched.payload_len_bits} bits, payload has {len(payload) * 8}")


def read_bits(payload: bytes, offsets: np.ndarray) -> np.ndarray:
    buf = np.frombuffer(payload, dtype=np.uint8)
    return (buf[offsets >> 3] >> (7 - (offsets & 7)).astype(np.uint8)) & 1


def write_bits(payload: bytes, offsets: np.ndarray, bits: np.ndarray) -> bytes:
    unpacked = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
    unpacked[offsets] = bits
    return np.packbits(unpacked).tobytes()


def mask_payload(payload: bytes, sched: PositionSchedule) -> bytes:
    """Payload with every scheduled bit cleared; input to the masked checksum."""
    _check(payload, sched)
    return write_bits(payload, sched.offsets, np.zeros(len(sched), dtype=np.uint8))


def embed_is(payload: bytes, is_: IdentifyingSequence, sched: PositionSchedule) -> bytes:
    _check(payload, sched)
    if len(sched) != is_.embed_len:
        raise ScheduleError(f"schedule has {len(sched)} offsets, IS embeds {is_.embed_len} bits")
    return write_bits(payload, sched.offsets, is_.bits())


def detect_mark(
    payload: bytes,
    sk: StegKey,
    seq: int,
    masked_checksum: int,
    embed_len: int = DEFAULT_EMBED_LEN,
    anomalies: Counter | None = None,
    sched: PositionSchedule | None = None,
) -> ControlBit | None:
    """Return the control bit whose IS is present in ``payload``, else None."""
    n = len(payload) * 8
    if n < embed_len:
        return None
    if sched is None:
        sched = position_schedule(sk, seq, n, embed_len)
    present = np.packbits(read_bits(payload, sched.offsets)).tobytes()
    hits = [
        cb
        for cb in (ControlBit.REQUEST, ControlBit.STEG)
        if present == _prefix_bytes(compute_is(sk, seq, masked_checksum, cb, embed_len))
    ]
    if len(hits) == 2:
        if anomalies is not None:
            anomalies["mark_collision"] += 1
        return None
    return hits[0] if hits else None
