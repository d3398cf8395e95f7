"""Benchmark grid, winner selection and the thesaurus artifact."""
