"""Outage, rate and energy-efficiency analysis of IRS phase-rotation schemes."""

__version__ = "0.1.0"
