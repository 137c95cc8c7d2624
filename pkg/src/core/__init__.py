"""Geometry, sweep scoring, depth networks, synthetic data, pipeline and metrics."""
