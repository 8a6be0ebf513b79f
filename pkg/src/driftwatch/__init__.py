"""Drift detection without labels."""
