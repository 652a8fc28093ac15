"""Frequency-bin biphoton comb simulation and analysis."""

__version__ = "0.1.0"
