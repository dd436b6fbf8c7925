# tme_forecast/market_data/__init__.py
"""Raw trade/book inputs and per-interval source features."""

from tme_forecast.market_data.features import (
    BOOK_FEATURE_NAMES,
    DEFAULT_QUANTILE_FRACS,
    TRADE_FEATURE_NAMES,
    FeatureVector,
    MarketFeatures,
    book_feature_matrix,
    compute_book_features,
    compute_trade_features,
    extract_market_features,
    feature_file_name,
    latest_snapshot_per_interval,
    make_grid,
    read_feature_file,
    target_volume,
    trade_feature_matrix,
    write_feature_file,
)
from tme_forecast.market_data.records import (
    ALL_SOURCES,
    BookSnapshot,
    Market,
    Side,
    SourceId,
    SourceKind,
    TradeRecord,
    load_book,
    load_trades,
    write_book,
    write_trades,
)

__all__ = [
    'ALL_SOURCES',
    'BOOK_FEATURE_NAMES',
    'DEFAULT_QUANTILE_FRACS',
    'TRADE_FEATURE_NAMES',
    'BookSnapshot',
    'FeatureVector',
    'MarketFeatures',
    'Market',
    'Side',
    'SourceId',
    'SourceKind',
    'TradeRecord',
    'book_feature_matrix',
    'compute_book_features',
    'compute_trade_features',
    'extract_market_features',
    'feature_file_name',
    'latest_snapshot_per_interval',
    'load_book',
    'load_trades',
    'make_grid',
    'read_feature_file',
    'target_volume',
    'trade_feature_matrix',
    'write_book',
    'write_feature_file',
    'write_trades',
]
