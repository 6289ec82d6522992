"""Contextual tree recommendation over a random forest."""

__version__ = "0.1.0"
