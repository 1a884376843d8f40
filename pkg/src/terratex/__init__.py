"""Terrain-texture clustering and retrieval toolkit."""

__version__ = "0.1.0"
