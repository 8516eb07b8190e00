"""Delay-absorption-aware flight departure delay prediction."""

__version__ = "0.1.0"
