"""Simulation laboratory for slow/fast systems driven by fractional noise."""

__version__ = "0.1.0"
