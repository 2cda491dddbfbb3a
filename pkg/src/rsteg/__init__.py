"""Retransmission steganography over a userspace TCP engine in a packet-level simulator."""

__version__ = "0.1.0"
