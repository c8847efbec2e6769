"""MLAP graph-to-sequence models for predicting function names from program graphs."""

__version__ = "0.1.0"
