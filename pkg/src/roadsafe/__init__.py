"""Integrity-aware GNSS reliability maps and safety-constrained route planning."""

__version__ = "0.1.0"
