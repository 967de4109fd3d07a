"""Preference-adaptive multi-robot flocking simulator and learning stack."""

__version__ = "0.1.0"
