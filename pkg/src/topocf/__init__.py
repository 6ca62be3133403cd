"""Topology-aware analysis of graph collaborative filtering on bipartite user-item data."""

__version__ = "0.1.0"
