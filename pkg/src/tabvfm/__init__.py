"""Exponential-family variational flow matching for mixed-type tables."""

__version__ = "0.1.0"
