"""Equiwave - random-wave equidistribution experiments on model surfaces."""

__version__ = "0.1.0"
