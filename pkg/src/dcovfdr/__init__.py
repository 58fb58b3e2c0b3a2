"""Distance-covariance association scans with false discovery rate control."""

__version__ = "0.1.0"
