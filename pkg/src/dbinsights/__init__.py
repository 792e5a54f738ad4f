"""Insight generation and evaluation over multi-table SQLite databases."""

__version__ = "0.1.0"
