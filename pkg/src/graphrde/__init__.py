"""Spatio-temporal forecasting with graph neural rough differential equations."""

__version__ = "0.1.0"
