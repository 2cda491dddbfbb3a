import hashlib
import random
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsteg.steg_core import (
    ControlBit,
    IdentifyingSequence,
    ScheduleError,
    StegKey,
    compute_is,
    detect_mark,
    embed_is,
    mask_payload,
    position_schedule,
    read_bits,
    write_bits,
)

KEY = StegKey(bytes(range(16)))

# Frozen oracle: SHA-256 over the 23-byte input key(16) || seq(4) || checksum(2) || cb(1).
IS_SEQ5_BEEF_REQUEST = "ed4ab1a4de3170a9cc308eefff5c2c54ea50d99fc3833e0cc7e1162fda4716ed"
IS_SEQ5_BEEF_STEG = "13d3a57d6a0556d6ca1e306239795850de31831b874f8c54a066a33e80b45a3e"
SCHED_SEQ5_HEAD = [3400, 1540, 7996, 6551, 1919, 365, 4754, 2664]
SCHED_SEQ6_HEAD = [2208, 1778, 4394, 1433, 221, 3731, 7048, 5272]


def test_is_matches_hand_built_hash_input():
    data = bytes(range(16)) + (5).to_bytes(4, "big") + (0xBEEF).to_bytes(2, "big") + b"\x00"
    assert len(data) == 23
    assert hashlib.sha256(data).hexdigest() == IS_SEQ5_BEEF_REQUEST
    assert compute_is(KEY, 5, 0xBEEF, ControlBit.REQUEST).digest.hex() == IS_SEQ5_BEEF_REQUEST
    assert compute_is(KEY, 5, 0xBEEF, ControlBit.STEG).digest.hex() == IS_SEQ5_BEEF_STEG


def test_control_bit_changes_digest():
    a = compute_is(KEY, 1, 0, ControlBit.REQUEST)
    b = compute_is(KEY, 1, 0, ControlBit.STEG)
    assert a.digest != b.digest


def test_is_bits_prefix():
    is_ = compute_is(KEY, 5, 0xBEEF, ControlBit.REQUEST, embed_len=12)
    full = np.unpackbits(np.frombuffer(bytes.fromhex(IS_SEQ5_BEEF_REQUEST), dtype=np.uint8))
    assert is_.bits().tolist() == full[:12].tolist()


def test_is_rejects_bad_lengths():
    with pytest.raises(ValueError):
        IdentifyingSequence(b"\x00" * 31)
    with pytest.raises(ValueError):
        IdentifyingSequence(b"\x00" * 32, embed_len=257)


def test_short_key_rejected():
    with pytest.raises(ValueError):
        StegKey(b"short")


def test_schedule_frozen_and_seq_dependent():
    s5 = position_schedule(KEY, 5, 8000)
    s6 = position_schedule(KEY, 6, 8000)
    assert s5.offsets[:8].tolist() == SCHED_SEQ5_HEAD
    assert s6.offsets[:8].tolist() == SCHED_SEQ6_HEAD
    assert s5 != s6


def test_schedule_too_long_for_payload():
    with pytest.raises(ScheduleError):
        position_schedule(KEY, 1, 64, embed_len=65)


@given(seq=st.integers(0, 2**32 - 1), nbytes=st.integers(17, 1500), k=st.integers(1, 128))
@settings(max_examples=60, deadline=None)
def test_schedule_distinct_in_range_and_prefix_closed(seq, nbytes, k):
    n = nbytes * 8
    full = position_schedule(KEY, seq, n, 128)
    part = position_schedule(KEY, seq, n, k)
    offs = full.offsets
    assert len(set(offs.tolist())) == 128
    assert offs.min() >= 0 and offs.max() < n
    assert part.offsets.tolist() == offs[:k].tolist()
    free = full.free_offsets()
    assert len(free) == n - 128
    assert not set(free.tolist()) & set(offs.tolist())


@given(payload=st.binary(min_size=16, max_size=400), seq=st.integers(0, 2**32 - 1), cb=st.sampled_from(ControlBit))
@settings(max_examples=60, deadline=None)
def test_embed_then_detect_round_trip(payload, seq, cb):
    sched = position_schedule(KEY, seq, len(payload) * 8)
    masked = mask_payload(payload, sched)
    is_ = compute_is(KEY, seq, 0x1234, cb)
    marked = embed_is(payload, is_, sched)
    # only scheduled bits change, so the masked payload is unchanged
    assert mask_payload(marked, sched) == masked
    assert read_bits(marked, sched.offsets).tolist() == is_.bits().tolist()
    assert detect_mark(marked, KEY, seq, 0x1234) is cb


@given(payload=st.binary(min_size=16, max_size=300))
@settings(max_examples=40, deadline=None)
def test_wrong_key_or_seq_does_not_detect(payload):
    sched = position_schedule(KEY, 9, len(payload) * 8)
    marked = embed_is(payload, compute_is(KEY, 9, 7, ControlBit.REQUEST), sched)
    other = StegKey(b"k" * 16)
    assert detect_mark(marked, other, 9, 7) is None
    assert detect_mark(marked, KEY, 10, 7) is None
    assert detect_mark(marked, KEY, 9, 8) is None


@given(payload=st.binary(min_size=1, max_size=200), data=st.data())
@settings(max_examples=50, deadline=None)
def test_write_read_bits_inverse(payload, data):
    n = len(payload) * 8
    offs = np.array(sorted(data.draw(st.sets(st.integers(0, n - 1), min_size=1, max_size=n))), dtype=np.int64)
    bits = np.array(data.draw(st.lists(st.integers(0, 1), min_size=len(offs), max_size=len(offs))), dtype=np.uint8)
    out = write_bits(payload, offs, bits)
    assert read_bits(out, offs).tolist() == bits.tolist()
    untouched = np.setdiff1d(np.arange(n), offs)
    assert read_bits(out, untouched).tolist() == read_bits(payload, untouched).tolist()


def test_false_positive_rate_short_is():
    # With a 32-bit IS a random payload matches either control bit with p = 2 * 2**-32,
    # so 10**5 unmarked payloads should produce no detections at all.
    rng = random.Random(11)
    hits = 0
    anomalies = Counter()
    for seq in range(100_000):
        payload = rng.randbytes(16)
        if detect_mark(payload, KEY, seq, 0, embed_len=32, anomalies=anomalies) is not None:
            hits += 1
    assert hits == 0
    assert not anomalies


def test_one_bit_is_outcome_frequencies():
    # With a one-bit IS each control bit's bit is a fair coin, as is the payload bit.
    # P(both match: collision) = P(neither) = P(only REQUEST) = P(only STEG) = 1/4.
    rng = random.Random(3)
    outcomes = Counter()
    anomalies = Counter()
    n = 4000
    for seq in range(n):
        outcomes[detect_mark(rng.randbytes(8), KEY, seq, 0, embed_len=1, anomalies=anomalies)] += 1
    sigma = (n * 0.25 * 0.75) ** 0.5
    assert abs(anomalies["mark_collision"] - n / 4) < 3 * sigma
    assert abs(outcomes[ControlBit.REQUEST] - n / 4) < 3 * sigma
    assert abs(outcomes[ControlBit.STEG] - n / 4) < 3 * sigma
