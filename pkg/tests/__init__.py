# tests/__init__.py
"""tme-forecast test suite."""
