# tests/unit/__init__.py
"""Unit tests - small in-memory inputs, no files beyond tmp_path."""
