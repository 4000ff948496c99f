"""Random walks, potential theory and multi-scale densities on percolation clusters."""

__version__ = "0.1.0"
