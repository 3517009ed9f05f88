"""Unit tests for mepscore components."""
