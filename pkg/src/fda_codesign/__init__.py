"""Transmit weight and waveform co-design for FDA-MIMO radar under spectral coexistence."""

__version__ = "0.1.0"
