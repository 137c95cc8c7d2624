"""Plane-sweep multi-view multi-person 3D pose estimation."""

__version__ = "0.1.0"
