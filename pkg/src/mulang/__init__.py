"""Discrete universal-symbol representations for multilingual encoders, at toy scale."""

__version__ = "0.1.0"
