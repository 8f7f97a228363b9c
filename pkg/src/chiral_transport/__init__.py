"""Entangled-state transport between two cavity-QED nodes over a chiral waveguide."""

__version__ = "0.1.0"
