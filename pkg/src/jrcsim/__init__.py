"""Dual-band CE-LFM-OFDM joint radar-communication simulator."""
__version__ = "0.1.0"
