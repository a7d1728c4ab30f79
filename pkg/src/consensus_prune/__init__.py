"""Layer pruning driven by a consensus of representation-similarity ranks."""

__version__ = "0.1.0"
