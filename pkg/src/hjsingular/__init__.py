"""Hamilton-Jacobi constraint analysis for singular higher-order Lagrangians."""

__version__ = "0.1.0"
