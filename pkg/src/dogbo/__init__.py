"""Behavior-informed Bayesian optimization of a planar biped stepping controller."""

__version__ = "0.1.0"
