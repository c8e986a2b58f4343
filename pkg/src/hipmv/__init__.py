"""Hierarchical integrative prediction for multi-view data with subgroups."""

__version__ = "0.1.0"
