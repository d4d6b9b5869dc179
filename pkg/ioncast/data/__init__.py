"""File formats, ingestion, splits, sampling, normalization and synthetic data."""
