# tme_forecast/evaluate/__init__.py
"""Metrics on the raw-volume scale and comparison reports."""

from tme_forecast.evaluate.metrics import (
    MetricsReport,
    PredictionSet,
    QuartileMetrics,
    QuartileReport,
    band_coverage,
    iw,
    mae,
    metrics_report,
    nnll,
    quartile_membership,
    quartile_report,
    rel_metrics,
    rmse,
)
from tme_forecast.evaluate.predictions import (
    LoadedModel,
    garch_inputs,
    garch_prediction_set,
    gbm_prediction_set,
    lagged_exog,
    load_model,
    prediction_set,
    tme_prediction_set,
)
from tme_forecast.evaluate.reports import (
    NA,
    ComparisonTable,
    band_frame,
    compare,
    report_rows,
    source_band_frame,
    write_report,
)

__all__ = [
    "NA",
    "ComparisonTable",
    "LoadedModel",
    "MetricsReport",
    "PredictionSet",
    "QuartileMetrics",
    "QuartileReport",
    "band_coverage",
    "band_frame",
    "compare",
    "garch_inputs",
    "garch_prediction_set",
    "gbm_prediction_set",
    "iw",
    "lagged_exog",
    "load_model",
    "mae",
    "metrics_report",
    "nnll",
    "prediction_set",
    "quartile_membership",
    "quartile_report",
    "rel_metrics",
    "report_rows",
    "rmse",
    "source_band_frame",
    "tme_prediction_set",
    "write_report",
]
