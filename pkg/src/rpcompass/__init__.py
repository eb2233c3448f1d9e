"""Radical-pair compass simulator: yields, magnetic sensitivity and global coherence."""

__version__ = "0.1.0"
