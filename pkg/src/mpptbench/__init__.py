"""Deterministic simulation and benchmarking of PV maximum power point trackers."""

__version__ = "0.1.0"
