# tests/integration/__init__.py
"""Integration tests - CLI pipeline and acceptance criteria on synthetic data."""
