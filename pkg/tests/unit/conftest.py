# tests/unit/conftest.py
"""Fixtures for unit tests - small, deterministic inputs built in memory."""

from pathlib import Path

import numpy as np
import pytest

from tme_forecast.market_data import ALL_SOURCES
from tme_forecast.preprocess import WindowedDataset, split_dataset
from tme_forecast.tme import TmeParams, random_params


# ============================================================
# CSV Fixtures
# ============================================================

@pytest.fixture
def write_csv(tmp_path):
    """Write text to a CSV under tmp_path and return its path."""
    def _write(name: str, text: str) -> Path:
        path = tmp_path / name
        path.write_text(text)
        return path
    return _write


@pytest.fixture
def trades_text() -> str:
    """Three trades in one minute, one in the next."""
    return (
        "timestamp,price,size,side\n"
        "1527804900,7500.0,0.5,B\n"
        "1527804910,7501.0,0.5,B\n"
        "1527804950,7499.5,0.3,S\n"
        "1527804965,7500.5,1.2,S\n"
    )


@pytest.fixture
def book_text() -> str:
    """Depth-2 book with a missing second ask level in the last row."""
    return (
        "timestamp,bid_px_1,bid_sz_1,bid_px_2,bid_sz_2,ask_px_1,ask_sz_1,ask_px_2,ask_sz_2\n"
        "1527804890,99,1,98,2,101,2,102,1\n"
        "1527804930,99.5,1,98,1,100.5,1,102,4\n"
        "1527804975,99,3,98.5,1,101,2,,\n"
    )


# ============================================================
# Model Fixtures
# ============================================================

@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def small_dims() -> tuple[int, ...]:
    return (2, 3)


@pytest.fixture
def small_params(rng, small_dims) -> TmeParams:
    """Two sources, h = 3, modest weights."""
    return random_params(small_dims, 3, rng, scale=0.3)


def make_dataset(
    rng: np.random.Generator,
    n: int,
    dims: tuple[int, ...],
    h: int,
    interval: float = 60.0,
) -> WindowedDataset:
    """Random windows with log-normal targets, a = 1."""
    windows = tuple(rng.normal(size=(n, d, h)) for d in dims)
    y = np.exp(rng.normal(0.0, 0.5, n))
    return WindowedDataset(
        sources=ALL_SOURCES[:len(dims)],
        t=(np.arange(n) + h) * interval,
        v=y,
        a=np.ones(n),
        y=y,
        windows=windows,
    )


@pytest.fixture
def small_dataset(rng, small_dims) -> WindowedDataset:
    return make_dataset(rng, 60, small_dims, 3)


@pytest.fixture
def small_split(small_dataset):
    return split_dataset(small_dataset, (0.6, 0.2, 0.2))


@pytest.fixture
def dataset_factory(rng):
    """Build random datasets of a given size and shape."""
    def _make(n: int, dims: tuple[int, ...], h: int) -> WindowedDataset:
        return make_dataset(rng, n, dims, h)
    return _make
