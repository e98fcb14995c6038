"""Stationary analysis of partially homogeneous quarter-plane random walks."""

__version__ = "0.1.0"
