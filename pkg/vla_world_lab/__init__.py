"""Desk-scale VLA world-model driving lab."""

__version__ = "1.0.0"
