"""Finite elements from a single global energy, differentiated automatically."""

__version__ = "0.1.0"
