"""Discrete flow bridge for bidirectional reaction prediction."""

__version__ = "0.1.0"
