"""Planar discrete elastic rod simulation of a snap-actuated jumping robot,
with a neural surrogate for inverse design."""

__version__ = "0.1.0"
