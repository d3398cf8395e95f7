"""Console output formatting."""
