"""Robust generalized Bayes variance estimation for linear regression."""

__version__ = "1.0.0"
