"""Cryptocurrency factor construction, idiosyncratic volatility and
investor-base panel regressions."""

__version__ = "0.1.0"
