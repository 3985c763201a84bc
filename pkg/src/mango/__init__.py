"""Offline single- and multi-objective optimization with a diffusion model
trained on the joint design-score distribution."""

__version__ = "0.1.0"
