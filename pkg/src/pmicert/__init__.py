"""Positivity certificates for polynomial matrices under universally quantified constraints."""

__version__ = "0.1.0"
