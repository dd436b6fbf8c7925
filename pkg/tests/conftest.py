# tests/conftest.py
"""Root pytest configuration."""

import sys

import pytest
from loguru import logger


def pytest_configure(config):
    """Configure pytest markers and keep loguru to warnings on stderr."""
    config.addinivalue_line(
        "markers", "integration: end-to-end and statistical tests (deselect with '-m \"not integration\"')"
    )
    logger.remove()
    logger.add(sys.stderr, level="WARNING")


def pytest_collection_modifyitems(config, items):
    """Mark everything under integration/ and run it after the unit tests."""
    for item in items:
        if "integration" in str(item.fspath):
            item.add_marker(pytest.mark.integration)
    items.sort(key=lambda item: item.get_closest_marker("integration") is not None)
