"""Error propagation in probability products: simulations and diagnostics."""

__version__ = "0.1.0"
