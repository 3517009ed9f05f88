# utils/__init__.py
"""Utility functions for mepscore."""

# Re-export commonly used functions
from .file_utils import load_dataset, load_structured_file, validate_file_path, write_dataset

__all__ = ["load_dataset", "load_structured_file", "validate_file_path", "write_dataset"]
