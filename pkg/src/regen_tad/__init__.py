"""Generative ensemble anomaly detection for multivariate return panels."""

__version__ = "0.1.0"
