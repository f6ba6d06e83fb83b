"""Predictor-based quantum architecture search with a self-supervised graph encoder."""

__version__ = "0.1.0"
