"""Robust beta-score Lagrange-multiplier tests for heteroscedasticity."""

__version__ = "0.1.0"
