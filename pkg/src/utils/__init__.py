"""Shared helpers: timestamps and seed derivation."""
