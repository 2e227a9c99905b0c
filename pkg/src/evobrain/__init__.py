"""Evolved modulation of a chess move predictor."""

__version__ = "0.1.0"
