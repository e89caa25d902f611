"""Lowest-order face and edge virtual element spaces on polytopal meshes."""

__version__ = "0.1.0"
