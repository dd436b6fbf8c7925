# tme_forecast/tme/__init__.py
"""Temporal mixture ensemble: model math, training, prediction and model files."""

from tme_forecast.tme.model import (
    component_moments,
    gate_logits,
    gate_probs,
    lognormal_logpdf,
    lognormal_moments,
    loss_gradient,
    nll_loss,
    source_log_moments,
)
from tme_forecast.tme.model_io import (
    forecast_frame,
    load_ensemble,
    save_ensemble,
    write_forecasts,
)
from tme_forecast.tme.optim import Adam
from tme_forecast.tme.params import (
    GateParams,
    SourceParams,
    TmeParams,
    init_params,
    param_count,
    random_params,
)
from tme_forecast.tme.predict import (
    Forecast,
    ForecastBatch,
    combine_moments,
    nll_dataset,
    nll_point,
    predict,
    predict_dataset,
)
from tme_forecast.tme.training import (
    Ensemble,
    MemberProvenance,
    TrainConfig,
    TrajectoryResult,
    collect_ensemble,
    random_search,
    train_trajectory,
)

__all__ = [
    "Adam",
    "Ensemble",
    "Forecast",
    "ForecastBatch",
    "GateParams",
    "MemberProvenance",
    "SourceParams",
    "TmeParams",
    "TrainConfig",
    "TrajectoryResult",
    "collect_ensemble",
    "combine_moments",
    "component_moments",
    "forecast_frame",
    "gate_logits",
    "gate_probs",
    "init_params",
    "load_ensemble",
    "lognormal_logpdf",
    "lognormal_moments",
    "loss_gradient",
    "nll_dataset",
    "nll_loss",
    "nll_point",
    "param_count",
    "predict",
    "predict_dataset",
    "random_params",
    "random_search",
    "save_ensemble",
    "source_log_moments",
    "train_trajectory",
    "write_forecasts",
]
