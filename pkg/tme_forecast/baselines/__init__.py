# tme_forecast/baselines/__init__.py
"""Econometric and tree-ensemble baselines on log-volume."""

from tme_forecast.baselines import garch, gbm

__all__ = ["garch", "gbm"]
