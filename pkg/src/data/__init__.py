"""Tabular ingestion, preprocessing and variant construction."""
