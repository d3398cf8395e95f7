"""Cluster validity indices and cluster characterization."""
