"""Classification surrogate for cluster assignments."""
