"""Coarse-to-fine sit-to-stand analysis from silhouettes and 3D bounding boxes."""

__version__ = "0.1.0"
