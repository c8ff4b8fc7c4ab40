"""Distributed geometric image codec with compressed linear measurements."""

__version__ = "0.1.0"
