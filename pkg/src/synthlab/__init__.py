"""Synthetic-prior zero-shot forecasting laboratory."""

__version__ = "0.1.0"
