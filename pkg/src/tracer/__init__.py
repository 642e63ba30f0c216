"""Tracer: forensic analysis of speedrun and challenge-run submissions."""

__version__ = "0.1.0"
