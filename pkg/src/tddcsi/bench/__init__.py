"""Experiment orchestration: configuration, link datasets, training entry points, sweeps."""
