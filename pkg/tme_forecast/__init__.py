# tme_forecast/__init__.py
"""Probabilistic intraday volume forecasting with temporal mixture ensembles."""

from tme_forecast.config import DEFAULTS, load_config

__version__ = "0.1.0"
__all__ = ["DEFAULTS", "load_config", "__version__"]
