"""Evaluation and ranking for two-level vessel segmentation challenges."""

__version__ = "0.1.0"
