"""Geodesics of the scale-invariant H1 metric on closed polygons."""

__version__ = "0.1.0"
