"""Collision-free trajectory optimization with adaptively subdivided Bezier curves."""

__version__ = "0.1.0"
