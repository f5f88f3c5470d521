"""Metrics, cross-validated grid search and learning curves."""
