"""Anomaly detection for multivariate time series built on a learned
directed dependency graph, a graph-temporal convolutional forecaster,
and PCA-based residual scoring with root-cause ranking."""

__version__ = "0.1.0"
