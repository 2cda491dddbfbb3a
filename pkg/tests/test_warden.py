import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rsteg.netsim import RunConfig, Simulation, TopologyConfig, run_simulation
from rsteg.tcp_engine import SEC, Flags, Mechanism, Segment
from rsteg.warden import (
    ConnCounters,
    TraceFormatError,
    Verdict,
    WardenStore,
    format_report,
    replay_trace,
    retrans_rate_monitor,
)

CONN = (1, 5000, 2, 80)


def data(seq, payload, carrier=False):
    s = Segment(1, 2, 5000, 80, seq, 1, Flags.ACK, 65535, 0, (), payload)
    s.meta.steg_carrier = carrier
    return s


def ack(n):
    return Segment(2, 1, 80, 5000, 1, n, Flags.ACK, 65535, 0, (), b"")


def store_with(*entries):
    w = WardenStore()
    for seq, n in entries:
        w.observe_data_segment(data(seq, b"a" * n))
    return w


def test_cumulative_ack_evicts_covered_entries():
    w = store_with((1000, 500), (1500, 500))
    assert w.observe_ack(ack(2000)) == 2
    assert w.stored_seqs(CONN) == set()


def test_partial_ack_evicts_only_covered():
    w = store_with((1000, 500), (1500, 500))
    assert w.observe_ack(ack(1500)) == 1
    assert w.stored_seqs(CONN) == {1500}


def test_duplicate_ack_evicts_nothing():
    w = store_with((1000, 500), (1500, 500))
    w.observe_ack(ack(1500))
    assert w.observe_ack(ack(1500)) == 0


def test_identical_retransmission_passes():
    w = WardenStore()
    assert w.observe_data_segment(data(1, b"abc")) is Verdict.PASS
    assert w.observe_data_segment(data(1, b"abc")) is Verdict.PASS
    assert w.detections == 0


def test_carrier_retransmission_detected_as_true_positive():
    w = WardenStore()
    w.observe_data_segment(data(1, b"abc"))
    assert w.observe_data_segment(data(1, b"xyz", carrier=True)) is Verdict.DETECT_AND_DROP
    assert (w.detections, w.true_positives, w.false_positives) == (1, 1, 0)


def test_corruption_difference_is_false_positive():
    w = WardenStore()
    w.observe_data_segment(data(1, b"abd"))  # corrupted original stored
    assert w.observe_data_segment(data(1, b"abc")) is Verdict.DETECT_AND_DROP
    assert (w.true_positives, w.false_positives) == (0, 1)


def test_peak_entries_tracked():
    w = store_with((1, 10), (11, 10), (21, 10))
    w.observe_ack(ack(31))
    assert w.peak_entries == 3
    assert w.stored_count == 0


@given(st.lists(st.tuples(st.integers(0, 20), st.binary(min_size=1, max_size=8)), max_size=60))
@settings(max_examples=80)
def test_digest_mode_agrees_with_full_mode(events):
    full, dig = WardenStore(), WardenStore(digest_mode=True)
    for slot, payload in events:
        seg = data(1 + 10 * slot, payload)
        assert full.observe_data_segment(seg) is dig.observe_data_segment(seg)
    assert full.detections == dig.detections


def test_monitor_single_connection_never_flagged():
    assert retrans_rate_monitor({CONN: ConnCounters(100, 50)}) == {CONN: (0.5, False)}


def test_monitor_flags_rsteg_connection():
    out = retrans_rate_monitor({"base": (1000, 30), "rsteg": (1000, 80)}, factor=2.0)
    assert out["rsteg"] == (0.08, True)
    assert out["base"] == (0.03, False)


def test_monitor_equal_rates_no_flags():
    out = retrans_rate_monitor({i: (100, 5) for i in range(4)})
    assert not any(flag for _, flag in out.values())


# -- in simulation ---------------------------------------------------------------


def test_no_detections_without_rsteg_or_corruption():
    sim = Simulation(TopologyConfig(seed=3, warden_tap="R1"), RunConfig(rsteg=False))
    run_simulation(sim, 0, 20 * SEC)
    assert sim.warden.detections == 0
    assert sim.sender.stats.retrans_natural > 0


def test_store_matches_unacked_ground_truth():
    sim = Simulation(TopologyConfig(seed=3, warden_tap="R1"), RunConfig(rsteg=False, trace=True))
    run_simulation(sim, 0, 10 * SEC)
    last_ack = max(int(line.split(" ack=")[1].split()[0]) for line in sim.trace if " tapack " in line)
    conn = sim.sender._segment(1, b"").conn_id
    expected = {s for s in sim.tap_seen if s + 1000 > last_ack}
    assert sim.warden.stored_seqs(conn) == expected


def test_replay_reproduces_live_verdicts():
    sim = Simulation(TopologyConfig(seed=4, warden_tap="R1"), RunConfig(mechanism=Mechanism.SACK, ir_p=0.05, trace=True))
    run_simulation(sim, 0, 15 * SEC)
    replayed = replay_trace(sim.trace)
    live = sim.warden.report()
    assert live["detections"] > 0
    for key in ("detections", "true_positives", "false_positives", "peak_entries", "stored_entries"):
        assert replayed.report()[key] == live[key]


def test_replay_rejects_garbage():
    with pytest.raises(TraceFormatError):
        replay_trace(["12 tap R1 conn=oops seq=1 len=10 dig=00 tags=-"])


def test_report_text_lists_connections():
    w = store_with((1, 10))
    text = format_report(w)
    assert text.startswith("[warden]")
    assert "conn 1:5000>2:80 retrans_rate = 0.000000 flagged = 0" in text
