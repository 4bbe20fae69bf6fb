"""Spectral statistics of random necklace chains."""

__version__ = "0.1.0"
