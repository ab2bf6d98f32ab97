"""Graphical-construction simulator for finite-range interacting particle systems."""

__version__ = "0.1.0"
