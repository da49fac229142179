"""Pseudo-spectral simulator for two-species nematic electrolytes."""

__version__ = "0.1.0"
