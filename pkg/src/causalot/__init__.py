"""Causal and bicausal optimal transport between finitely supported path measures."""

__version__ = "0.1.0"
