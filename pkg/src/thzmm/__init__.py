"""Analytical and simulation toolkit for joint THz/mmWave access networks."""

__version__ = "0.1.0"
