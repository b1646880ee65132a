"""Measurement-calibrated network-calculus delay analysis for a single node."""

__version__ = "0.1.0"
