# tme_forecast/synthetic/__init__.py
"""Seeded generators and brute-force oracles for checking every model without market data."""

from tme_forecast.synthetic.generators import (
    DESEASONALIZED_LOG_MEAN,
    MARKET_FILES,
    START_TS,
    GarchSimSpec,
    GarchSimulation,
    IntradayVolume,
    MarketFiles,
    TmeGenerativeSpec,
    TmeSimulation,
    diurnal_profile,
    gen_garch_series,
    gen_intraday_volume,
    gen_market_files,
    gen_tme_data,
    informative_source_spec,
)
from tme_forecast.synthetic.oracles import McMoments, fd_gradient, gradient_rel_error, mc_mixture_moments

__all__ = [
    "DESEASONALIZED_LOG_MEAN",
    "MARKET_FILES",
    "START_TS",
    "GarchSimSpec",
    "GarchSimulation",
    "IntradayVolume",
    "MarketFiles",
    "McMoments",
    "TmeGenerativeSpec",
    "TmeSimulation",
    "diurnal_profile",
    "fd_gradient",
    "gen_garch_series",
    "gen_intraday_volume",
    "gen_market_files",
    "gen_tme_data",
    "gradient_rel_error",
    "informative_source_spec",
    "mc_mixture_moments",
]
