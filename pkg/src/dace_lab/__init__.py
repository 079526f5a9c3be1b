"""Difficulty-aware certainty-guided exploration, at desk scale."""

__version__ = "0.1.0"
