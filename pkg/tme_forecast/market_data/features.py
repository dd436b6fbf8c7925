# tme_forecast/market_data/features.py
"""Per-interval feature vectors for the transaction and order-book sources."""

import math
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from tme_forecast.errors import NoSnapshotBeforeGridStart, SourceGridMismatch
from tme_forecast.market_data.records import (
    BOOK_FEATURE_DIM,
    TRADE_FEATURE_DIM,
    BookSnapshot,
    Market,
    Side,
    SourceId,
    SourceKind,
    TradeRecord,
)

DEFAULT_QUANTILE_FRACS = (0.01, 0.05, 0.10)

TRADE_FEATURE_NAMES = (
    'buy_volume', 'sell_volume', 'volume_imbalance',
    'buy_count', 'sell_count', 'count_imbalance',
)

BOOK_FEATURE_NAMES = (
    'spread', 'ask_volume', 'bid_volume', 'volume_imbalance',
    'ask_slope_1', 'ask_slope_5', 'ask_slope_10',
    'bid_slope_1', 'bid_slope_5', 'bid_slope_10',
    'slope_imbalance_1', 'slope_imbalance_5', 'slope_imbalance_10',
)


@dataclass(frozen=True)
class FeatureVector:
    source: SourceId
    interval_start: float
    values: tuple[float, ...]

    def __post_init__(self):
        if len(self.values) != self.source.dim:
            raise ValueError(
                f"{self.source.name} expects {self.source.dim} values, got {len(self.values)}"
            )


# ============================================================
# Grid
# ============================================================

def make_grid(start: float, end: float, interval: float) -> np.ndarray:
    """Uniform grid of interval starts covering [start, end], aligned to multiples of interval."""
    first = math.floor(start / interval) * interval
    last = math.floor(end / interval) * interval
    return np.arange(first, last + interval / 2, interval, dtype=float)


def _check_uniform(grid: np.ndarray, interval: float) -> None:
    if grid.size > 1 and not np.allclose(np.diff(grid), interval, rtol=0, atol=1e-9):
        raise SourceGridMismatch(f"grid is not uniform with step {interval}")


def interval_index(timestamps: np.ndarray, grid: np.ndarray, interval: float) -> np.ndarray:
    """Grid slot of each timestamp on half-open intervals; -1 when off-grid."""
    idx = np.floor((np.asarray(timestamps, dtype=float) - grid[0]) / interval).astype(np.int64)
    idx[(idx < 0) | (idx >= grid.size)] = -1
    return idx


# ============================================================
# Transactions
# ============================================================

def trade_feature_matrix(
    trades: Sequence[TradeRecord], interval: float, grid: np.ndarray,
) -> np.ndarray:
    """(T, 6) matrix of transaction features on the grid."""
    grid = np.asarray(grid, dtype=float)
    _check_uniform(grid, interval)
    out = np.zeros((grid.size, TRADE_FEATURE_DIM))
    if not trades or grid.size == 0:
        return out

    ts = np.fromiter((t.timestamp for t in trades), dtype=float, count=len(trades))
    size = np.fromiter((t.size for t in trades), dtype=float, count=len(trades))
    is_buy = np.fromiter((t.side == Side.BUY for t in trades), dtype=bool, count=len(trades))

    idx = interval_index(ts, grid, interval)
    on_grid = idx >= 0
    idx, size, is_buy = idx[on_grid], size[on_grid], is_buy[on_grid]

    n = grid.size
    out[:, 0] = np.bincount(idx[is_buy], weights=size[is_buy], minlength=n)
    out[:, 1] = np.bincount(idx[~is_buy], weights=size[~is_buy], minlength=n)
    out[:, 2] = np.abs(out[:, 0] - out[:, 1])
    out[:, 3] = np.bincount(idx[is_buy], minlength=n)
    out[:, 4] = np.bincount(idx[~is_buy], minlength=n)
    out[:, 5] = np.abs(out[:, 3] - out[:, 4])
    return out


def compute_trade_features(
    trades: Sequence[TradeRecord],
    interval: float,
    grid: Sequence[float],
    market: Market = Market.TARGET,
) -> list[FeatureVector]:
    """Buy/sell volume, volume imbalance, buy/sell counts and count imbalance per interval.

    Empty intervals produce all-zero vectors.
    """
    grid = np.asarray(grid, dtype=float)
    matrix = trade_feature_matrix(trades, interval, grid)
    source = SourceId(market, SourceKind.TRANSACTIONS)
    return [
        FeatureVector(source=source, interval_start=float(start), values=tuple(row.tolist()))
        for start, row in zip(grid, matrix)
    ]


def target_volume(trades: Sequence[TradeRecord], interval: float, grid: np.ndarray) -> np.ndarray:
    """Traded size per interval (buy + sell volume)."""
    matrix = trade_feature_matrix(trades, interval, grid)
    return matrix[:, 0] + matrix[:, 1]


# ============================================================
# Order book
# ============================================================

def _slopes(levels: tuple[tuple[float, float], ...], quantile_fracs: Sequence[float]) -> list[float]:
    """Cumulative size over the first ceil(q * n_levels) levels, per fraction q."""
    sizes = np.cumsum([size for _, size in levels])
    n = len(levels)
    out = []
    for q in quantile_fracs:
        k = min(n, max(1, math.ceil(q * n - 1e-9)))
        out.append(float(sizes[k - 1]))
    return out


def book_feature_values(
    snapshot: BookSnapshot,
    quantile_fracs: Sequence[float] = DEFAULT_QUANTILE_FRACS,
) -> tuple[float, ...]:
    ask_volume = float(sum(size for _, size in snapshot.asks))
    bid_volume = float(sum(size for _, size in snapshot.bids))
    ask_slopes = _slopes(snapshot.asks, quantile_fracs)
    bid_slopes = _slopes(snapshot.bids, quantile_fracs)
    slope_imbalance = [abs(a - b) for a, b in zip(ask_slopes, bid_slopes)]
    return (
        snapshot.spread,
        ask_volume,
        bid_volume,
        abs(ask_volume - bid_volume),
        *ask_slopes,
        *bid_slopes,
        *slope_imbalance,
    )


def compute_book_features(
    snapshot: BookSnapshot,
    quantile_fracs: Sequence[float] = DEFAULT_QUANTILE_FRACS,
    market: Market = Market.TARGET,
    interval_start: float | None = None,
) -> FeatureVector:
    """The 13 order-book features of one snapshot.

    Order: spread, ask volume, bid volume, |ask - bid|, ask slopes, bid slopes,
    slope imbalances. Slopes are cumulative sizes over the levels closest to
    the best price that make up at least the given fraction of the side's levels.
    """
    if len(quantile_fracs) != 3:
        raise ValueError("exactly three quantile fractions are required")
    return FeatureVector(
        source=SourceId(market, SourceKind.ORDER_BOOK),
        interval_start=snapshot.timestamp if interval_start is None else interval_start,
        values=book_feature_values(snapshot, quantile_fracs),
    )


def latest_snapshot_per_interval(
    snapshots: Sequence[BookSnapshot],
    grid: Sequence[float],
    interval: float,
) -> list[BookSnapshot]:
    """Last snapshot strictly before each interval's end, carried forward over gaps."""
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        return []
    if not snapshots:
        raise NoSnapshotBeforeGridStart("no book snapshots")

    ts = np.fromiter((s.timestamp for s in snapshots), dtype=float, count=len(snapshots))
    ends = grid + interval
    idx = np.searchsorted(ts, ends, side='left') - 1
    if idx[0] < 0:
        raise NoSnapshotBeforeGridStart(
            f"no snapshot before the end of the first interval at {grid[0] + interval}"
        )
    return [snapshots[i] for i in idx]


def book_feature_matrix(
    snapshots: Sequence[BookSnapshot],
    grid: np.ndarray,
    interval: float,
    quantile_fracs: Sequence[float] = DEFAULT_QUANTILE_FRACS,
) -> np.ndarray:
    """(T, 13) matrix of order-book features on the grid."""
    grid = np.asarray(grid, dtype=float)
    _check_uniform(grid, interval)
    aligned = latest_snapshot_per_interval(snapshots, grid, interval)
    out = np.empty((grid.size, BOOK_FEATURE_DIM))
    cache: dict[int, tuple[float, ...]] = {}
    for row, snap in enumerate(aligned):
        key = id(snap)
        if key not in cache:
            cache[key] = book_feature_values(snap, quantile_fracs)
        out[row] = cache[key]
    return out


# ============================================================
# Feature files
# ============================================================

FEATURE_COLUMNS = ['interval_start', 'source', 'market'] + [
    f"f_{i}" for i in range(1, BOOK_FEATURE_DIM + 1)
]


def feature_file_name(source: SourceId) -> str:
    return f"features_{source.market.value}_{source.kind.value}.csv"


def write_feature_file(
    source: SourceId, grid: np.ndarray, matrix: np.ndarray, path: Path | str,
) -> None:
    """Write one source's features; transaction files leave f_7..f_13 empty."""
    if matrix.shape != (grid.size, source.dim):
        raise SourceGridMismatch(
            f"{source.name}: matrix {matrix.shape} does not match grid of {grid.size}"
        )
    df = pd.DataFrame(matrix, columns=[f"f_{i}" for i in range(1, source.dim + 1)])
    df.insert(0, 'market', source.market.value)
    df.insert(0, 'source', source.kind.value)
    df.insert(0, 'interval_start', np.asarray(grid, dtype=float))
    df = df.reindex(columns=FEATURE_COLUMNS)
    df.to_csv(path, index=False, float_format='%.17g')
    logger.debug(f"Wrote {len(df)} rows of {source.name} features to {path}")


def read_feature_file(path: Path | str) -> tuple[SourceId, np.ndarray, np.ndarray]:
    """Read a feature file back into (source, grid, matrix)."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"File not found: {path}")
    df = pd.read_csv(p)
    if list(df.columns) != FEATURE_COLUMNS or df.empty:
        raise SourceGridMismatch(f"{path} is not a feature file")
    source = SourceId(Market(df['market'].iloc[0]), SourceKind(df['source'].iloc[0]))
    grid = df['interval_start'].to_numpy(dtype=float)
    matrix = df[[f"f_{i}" for i in range(1, source.dim + 1)]].to_numpy(dtype=float)
    return source, grid, matrix


# ============================================================
# All sources on one grid
# ============================================================

@dataclass(frozen=True)
class MarketFeatures:
    grid: np.ndarray
    features: dict[SourceId, np.ndarray]
    volumes: np.ndarray


def extract_market_features(
    trades: dict[Market, Sequence[TradeRecord]],
    books: dict[Market, Sequence[BookSnapshot]],
    interval: float,
    quantile_fracs: Sequence[float] = DEFAULT_QUANTILE_FRACS,
) -> MarketFeatures:
    """Feature matrices of all four sources and the target volume on a shared grid.

    The grid spans the earliest to the latest record across every input.
    """
    stamps = [r.timestamp for records in trades.values() for r in records[:1] + records[-1:]]
    stamps += [s.timestamp for snaps in books.values() for s in snaps[:1] + snaps[-1:]]
    if not stamps:
        raise SourceGridMismatch("no records to build a grid from")
    grid = make_grid(min(stamps), max(stamps), interval)

    features: dict[SourceId, np.ndarray] = {}
    for market in (Market.TARGET, Market.EXTERNAL):
        features[SourceId(market, SourceKind.TRANSACTIONS)] = trade_feature_matrix(
            trades[market], interval, grid,
        )
        features[SourceId(market, SourceKind.ORDER_BOOK)] = book_feature_matrix(
            books[market], grid, interval, quantile_fracs,
        )
    volumes = target_volume(trades[Market.TARGET], interval, grid)
    logger.info(
        f"Extracted features for {grid.size} intervals of {interval:g}s, "
        f"{int(np.sum(volumes == 0))} with zero target volume"
    )
    return MarketFeatures(grid=grid, features=features, volumes=volumes)
