"""Energy-landscape learning and structural-change detection for multivariate time series."""

__version__ = "0.1.0"
