"""Dynamic hypergraph multiple-instance learning on precomputed patch features."""

__version__ = "0.1.0"
