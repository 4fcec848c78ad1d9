"""Staggered DG solver for coupled bulk and fracture Darcy flow."""

__version__ = "0.1.0"
