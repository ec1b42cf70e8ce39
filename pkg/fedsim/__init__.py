"""Federated learning simulator with unbiased gradient aggregation and meta updating."""

__version__ = "1.0.0"
