"""Fit an atlas of coordinate charts to a point cloud and read off its topology."""

__version__ = "0.1.0"
