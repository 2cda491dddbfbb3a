"""Run-level metrics: steganographic bandwidth and retransmission difference."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from decimal import Decimal


def steganographic_bandwidth(n_s: int, s_s: int, t: float) -> float:
    """Bytes of steganogram per second: carriers x payload size / duration."""
    if t <= 0:
        raise ValueError(f"duration must be positive, got {t}")
    return n_s * s_s / t


def retransmission_difference(rate_with_rsteg: float, rate_baseline: float) -> float:
    """Difference of two retransmission rates (fractions), in percentage points.

    Computed on the decimal reading of each float so that 0.07 vs 0.05 gives exactly 2.0.
    """
    for name, rate in (("rate_with_rsteg", rate_with_rsteg), ("rate_baseline", rate_baseline)):
        if not 0.0 <= rate <= 1.0:
            raise ValueError(f"{name} must be a fraction in [0, 1], got {rate}")
    return float((Decimal(repr(float(rate_with_rsteg))) - Decimal(repr(float(rate_baseline)))) * 100)


@dataclass
class RunMetrics:
    n_s: int  # carriers extracted by the steganogram receiver
    s_s: int  # segment payload size, bytes
    t: float  # measurement window, seconds
    segments_sent: int
    retrans_natural: int
    retrans_intentional: int
    steg_bits: int = 0
    bits_per_carrier: int = 0
    marks: int = 0
    eligible: int = 0
    first_sent: int = 0
    timeouts: int = 0
    fast_retransmits: int = 0
    delivered_bytes: int = 0
    queue_drops: int = 0
    checksum_discards: int = 0
    udp_sent: int = 0
    udp_drops: int = 0
    warden: dict = field(default_factory=dict)
    anomalies: dict = field(default_factory=dict)

    @property
    def s_b(self) -> float:
        return steganographic_bandwidth(self.n_s, self.s_s, self.t)

    @property
    def retransmissions(self) -> int:
        return self.retrans_natural + self.retrans_intentional

    @property
    def retrans_rate(self) -> float:
        return self.retransmissions / self.segments_sent if self.segments_sent else 0.0

    def as_dict(self) -> dict:
        d = asdict(self)
        d["s_b"] = self.s_b
        d["retrans_rate"] = self.retrans_rate
        return d

    def to_text(self) -> str:
        rows = [
            ("N_S", self.n_s),
            ("S_S", self.s_s),
            ("T", f"{self.t:g}"),
            ("S_B_Bps", f"{self.s_b:.3f}"),
            ("segments_sent", self.segments_sent),
            ("first_transmissions", self.first_sent),
            ("retrans_natural", self.retrans_natural),
            ("retrans_intentional", self.retrans_intentional),
            ("retrans_rate", f"{self.retrans_rate:.6f}"),
            ("marks", self.marks),
            ("eligible", self.eligible),
            ("steg_bits", self.steg_bits),
            ("timeouts", self.timeouts),
            ("fast_retransmits", self.fast_retransmits),
            ("delivered_bytes", self.delivered_bytes),
            ("queue_drops", self.queue_drops),
            ("checksum_discards", self.checksum_discards),
            ("udp_sent", self.udp_sent),
            ("udp_drops", self.udp_drops),
        ]
        rows += [(f"warden_{k}", v) for k, v in sorted(self.warden.items())]
        rows += [(f"anomaly_{k}", v) for k, v in sorted(self.anomalies.items())]
        return "\n".join(f"{k} = {v}" for k, v in rows)
