"""Surrogate-assisted comparison of power-sector scenarios with and without storage."""

__version__ = "0.1.0"
