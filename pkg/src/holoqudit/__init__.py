"""Holonomic gate synthesis and verification on multi-level bipartite systems."""

__version__ = "0.1.0"
