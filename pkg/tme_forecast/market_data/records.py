# tme_forecast/market_data/records.py
"""Raw market records and their CSV loaders.

Trades CSV: ``timestamp,price,size,side`` with ``side`` in {B, S}.
Book CSV: ``timestamp,bid_px_1,bid_sz_1,...,bid_px_D,bid_sz_D,ask_px_1,ask_sz_1,...``
with a fixed depth ``D`` per file; missing deeper levels are empty fields.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from tme_forecast.errors import (
    CrossedBook,
    MalformedRow,
    NonMonotoneTimestamp,
    NonPositiveSize,
)


# ============================================================
# Enums
# ============================================================

class Side(str, Enum):
    """Aggressor side as flagged by the exchange."""
    BUY = 'B'
    SELL = 'S'


class Market(str, Enum):
    TARGET = 'target'
    EXTERNAL = 'external'


class SourceKind(str, Enum):
    TRANSACTIONS = 'transactions'
    ORDER_BOOK = 'order_book'


TRADE_FEATURE_DIM = 6
BOOK_FEATURE_DIM = 13


@dataclass(frozen=True)
class SourceId:
    """One of the four data sources (market × kind)."""
    market: Market
    kind: SourceKind

    @property
    def dim(self) -> int:
        """Feature dimension d_s of this source."""
        return TRADE_FEATURE_DIM if self.kind == SourceKind.TRANSACTIONS else BOOK_FEATURE_DIM

    @property
    def name(self) -> str:
        return f"{self.market.value}_{self.kind.value}"

    @classmethod
    def from_name(cls, name: str) -> 'SourceId':
        for source in ALL_SOURCES:
            if source.name == name:
                return source
        raise ValueError(f"Unknown source: {name}")


ALL_SOURCES: tuple[SourceId, ...] = (
    SourceId(Market.TARGET, SourceKind.TRANSACTIONS),
    SourceId(Market.TARGET, SourceKind.ORDER_BOOK),
    SourceId(Market.EXTERNAL, SourceKind.TRANSACTIONS),
    SourceId(Market.EXTERNAL, SourceKind.ORDER_BOOK),
)


# ============================================================
# Records
# ============================================================

@dataclass(frozen=True)
class TradeRecord:
    timestamp: float
    price: float
    size: float
    side: Side


@dataclass(frozen=True)
class BookSnapshot:
    """Book state; bids by strictly decreasing price, asks strictly increasing."""
    timestamp: float
    bids: tuple[tuple[float, float], ...]
    asks: tuple[tuple[float, float], ...]

    @property
    def best_bid(self) -> float:
        return self.bids[0][0]

    @property
    def best_ask(self) -> float:
        return self.asks[0][0]

    @property
    def spread(self) -> float:
        return self.best_ask - self.best_bid


TRADE_COLUMNS = ['timestamp', 'price', 'size', 'side']


def book_columns(depth: int) -> list[str]:
    """Header of a book CSV with ``depth`` levels per side."""
    columns = ['timestamp']
    for side in ('bid', 'ask'):
        for level in range(1, depth + 1):
            columns += [f"{side}_px_{level}", f"{side}_sz_{level}"]
    return columns


# ============================================================
# Helpers
# ============================================================

def _read_raw_csv(path: Path | str) -> pd.DataFrame:
    """Read a CSV as strings so every row can be validated with its number."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"File not found: {path}")
    logger.info(f"Loading {path}")
    return pd.read_csv(p, dtype=str, keep_default_na=False)


def _first_row(mask: np.ndarray) -> int | None:
    """1-based row number of the first True entry, or None."""
    hits = np.flatnonzero(mask)
    return int(hits[0]) + 1 if hits.size else None


def _to_seconds(values: pd.Series, ts_ms: bool) -> np.ndarray:
    ts = pd.to_numeric(values, errors='coerce').to_numpy(dtype=float)
    return ts / 1000.0 if ts_ms else ts


# ============================================================
# Loaders
# ============================================================

def load_trades(path: Path | str, ts_ms: bool = False) -> list[TradeRecord]:
    """Load and validate a trades CSV.

    Rows are verified to be timestamp-sorted, never re-sorted. With ``ts_ms``
    the timestamps are integer milliseconds and are converted to seconds.
    """
    df = _read_raw_csv(path)
    if list(df.columns) != TRADE_COLUMNS:
        raise MalformedRow(0, f"expected header {','.join(TRADE_COLUMNS)}")
    if df.empty:
        return []

    ts = _to_seconds(df['timestamp'], ts_ms)
    price = pd.to_numeric(df['price'], errors='coerce').to_numpy(dtype=float)
    size = pd.to_numeric(df['size'], errors='coerce').to_numpy(dtype=float)
    side = df['side'].str.strip()

    malformed = (
        ~np.isfinite(ts) | ~np.isfinite(price) | ~np.isfinite(size)
        | ~side.isin([s.value for s in Side]).to_numpy()
        | (np.nan_to_num(price, nan=1.0) <= 0)
    )
    non_positive = ~malformed & (size <= 0)
    non_monotone = np.zeros(len(df), dtype=bool)
    non_monotone[1:] = ts[1:] < ts[:-1]
    non_monotone &= ~malformed

    # Report whichever problem occurs first in the file
    candidates = [
        (_first_row(malformed), MalformedRow),
        (_first_row(non_positive), NonPositiveSize),
        (_first_row(non_monotone), NonMonotoneTimestamp),
    ]
    found = [(row, exc) for row, exc in candidates if row is not None]
    if found:
        row, exc = min(found, key=lambda item: item[0])
        raise exc(row)

    records = [
        TradeRecord(timestamp=t, price=p, size=s, side=Side(sd))
        for t, p, s, sd in zip(ts.tolist(), price.tolist(), size.tolist(), side.tolist())
    ]
    logger.info(f"Loaded {len(records)} trades")
    return records


def _parse_levels(
    row: dict[str, str], side: str, depth: int, line: int,
) -> tuple[tuple[float, float], ...]:
    levels = []
    ended = False
    for level in range(1, depth + 1):
        px_raw = row[f"{side}_px_{level}"].strip()
        sz_raw = row[f"{side}_sz_{level}"].strip()
        if not px_raw and not sz_raw:
            ended = True
            continue
        if ended or not px_raw or not sz_raw:
            raise MalformedRow(line, f"{side} level {level} incomplete or after a gap")
        try:
            px, sz = float(px_raw), float(sz_raw)
        except ValueError as e:
            raise MalformedRow(line, str(e)) from e
        if not (np.isfinite(px) and np.isfinite(sz)) or px <= 0 or sz <= 0:
            raise MalformedRow(line, f"{side} level {level} must be positive")
        levels.append((px, sz))
    if not levels:
        raise MalformedRow(line, f"no {side} levels")
    return tuple(levels)


def load_book(path: Path | str, ts_ms: bool = False) -> list[BookSnapshot]:
    """Load and validate a fixed-depth book CSV."""
    df = _read_raw_csv(path)
    depth = sum(1 for c in df.columns if c.startswith('bid_px_'))
    if depth == 0 or list(df.columns) != book_columns(depth):
        raise MalformedRow(0, "book header does not match timestamp,bid_px_1,bid_sz_1,...")

    snapshots: list[BookSnapshot] = []
    last_ts = -np.inf
    for i, row in enumerate(df.to_dict('records'), start=1):
        try:
            ts = float(row['timestamp'])
        except ValueError as e:
            raise MalformedRow(i, str(e)) from e
        if ts_ms:
            ts /= 1000.0
        if ts < last_ts:
            raise NonMonotoneTimestamp(i)
        last_ts = ts

        bids = _parse_levels(row, 'bid', depth, i)
        asks = _parse_levels(row, 'ask', depth, i)
        if any(b[0] <= nxt[0] for b, nxt in zip(bids, bids[1:])):
            raise MalformedRow(i, "bid prices must strictly decrease")
        if any(a[0] >= nxt[0] for a, nxt in zip(asks, asks[1:])):
            raise MalformedRow(i, "ask prices must strictly increase")
        if bids[0][0] >= asks[0][0]:
            raise CrossedBook(i)
        snapshots.append(BookSnapshot(timestamp=ts, bids=bids, asks=asks))

    logger.info(f"Loaded {len(snapshots)} book snapshots (depth {depth})")
    return snapshots


# ============================================================
# Writers
# ============================================================

def write_trades(trades: list[TradeRecord], path: Path | str) -> None:
    df = pd.DataFrame(
        {
            'timestamp': [t.timestamp for t in trades],
            'price': [t.price for t in trades],
            'size': [t.size for t in trades],
            'side': [t.side.value for t in trades],
        },
        columns=TRADE_COLUMNS,
    )
    df.to_csv(path, index=False)


def write_book(snapshots: list[BookSnapshot], path: Path | str, depth: int) -> None:
    rows = []
    for snap in snapshots:
        row: list[object] = [snap.timestamp]
        for levels in (snap.bids, snap.asks):
            for level in range(depth):
                if level < len(levels):
                    row += [levels[level][0], levels[level][1]]
                else:
                    row += ['', '']
        rows.append(row)
    pd.DataFrame(rows, columns=book_columns(depth)).to_csv(path, index=False)
