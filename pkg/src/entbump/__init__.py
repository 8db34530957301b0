"""Entropy-bump two-weight verification laboratory."""
__version__ = "0.1.0"
