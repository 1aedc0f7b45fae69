"""Masked self-attention token dynamics, rank-collapse bounds and LayerNorm equilibria."""

__version__ = "0.1.0"
