"""Local and global explainers."""
