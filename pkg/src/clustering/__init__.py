"""Clustering algorithms and hyperparameter selection."""
