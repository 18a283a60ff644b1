"""Similarity neural networks for heterogeneous, incomplete tabular data."""

__version__ = "0.1.0"
