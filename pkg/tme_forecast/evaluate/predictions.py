# tme_forecast/evaluate/predictions.py
"""Turn a saved model of any kind into a PredictionSet on one split."""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from loguru import logger

from tme_forecast.baselines import garch, gbm
from tme_forecast.errors import IncompatibleManifest
from tme_forecast.evaluate.metrics import PredictionSet
from tme_forecast.preprocess import DatasetSplit, WindowedDataset
from tme_forecast.tme import (
    Ensemble,
    ForecastBatch,
    load_ensemble,
    lognormal_logpdf,
    lognormal_moments,
    nll_dataset,
    predict_dataset,
)

MODEL_KINDS = ('tme', 'garch', 'gbm')
PARTS = ('train', 'validation', 'test')


@dataclass(frozen=True)
class LoadedModel:
    kind: str
    model: Ensemble | garch.FittedArmaxGarch | gbm.GbmModel
    data: dict[str, Any]

    @property
    def dataset_hash(self) -> str:
        return self.data.get('dataset_hash', '')


def load_model(path: Path | str) -> LoadedModel:
    """Dispatch on the file's ``model`` key."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"File not found: {path}")
    data = json.loads(p.read_text())
    kind = data.get('model')
    if kind == 'tme':
        ensemble, data = load_ensemble(p)
        return LoadedModel(kind, ensemble, data)
    if kind == 'garch':
        return LoadedModel(kind, garch.fit_from_report(data), data)
    if kind == 'gbm':
        return LoadedModel(kind, gbm.model_from_dict(data), data)
    raise IncompatibleManifest(f"{path}: unknown model kind {kind!r}")


def _part(split: DatasetSplit, part: str) -> WindowedDataset:
    if part not in PARTS:
        raise ValueError(f"part must be one of {PARTS}, got {part!r}")
    return getattr(split, part)


# ============================================================
# Per-model prediction sets
# ============================================================

def tme_prediction_set(
    ensemble: Ensemble, dataset: WindowedDataset,
) -> tuple[PredictionSet, ForecastBatch]:
    batch = predict_dataset(ensemble, dataset)
    pred = PredictionSet(
        v_true=dataset.v,
        v_hat=dataset.a * batch.mean,
        a=dataset.a,
        sd_hat=batch.sd,
        nll=nll_dataset(ensemble, dataset),
    )
    return pred, batch


def lagged_exog(dataset: WindowedDataset) -> np.ndarray:
    """Features of interval t-1 for every source, concatenated source-major."""
    return np.concatenate([w[:, :, -1] for w in dataset.windows], axis=1)


def garch_inputs(split: DatasetSplit) -> tuple[np.ndarray, np.ndarray, dict[str, int]]:
    """(log y, lag-1 exog, start offset per part) over the time-ordered concatenation."""
    parts = [split.train, split.validation, split.test]
    log_y = np.concatenate([np.log(p.y) for p in parts])
    exog = np.concatenate([lagged_exog(p) for p in parts], axis=0)
    offsets = np.cumsum([0] + [len(p) for p in parts[:-1]])
    return log_y, exog, dict(zip(PARTS, (int(o) for o in offsets)))


def garch_prediction_set(
    fitted: garch.FittedArmaxGarch, split: DatasetSplit, part: str = 'test',
) -> PredictionSet:
    """One-step log-normal forecasts, filtering the series from the first training point."""
    dataset = _part(split, part)
    log_y, exog, offsets = garch_inputs(split)
    start = offsets[part]
    mean_log, var_log = garch.rolling_forecast(
        fitted, log_y, exog if fitted.spec.use_exog else None, start,
    )
    mean_log, var_log = mean_log[: len(dataset)], var_log[: len(dataset)]
    mean_y, var_y = lognormal_moments(mean_log, var_log)
    return PredictionSet(
        v_true=dataset.v,
        v_hat=dataset.a * mean_y,
        a=dataset.a,
        sd_hat=np.sqrt(var_y),
        nll=-lognormal_logpdf(dataset.y, mean_log, var_log),
    )


def gbm_prediction_set(model: gbm.GbmModel, dataset: WindowedDataset) -> PredictionSet:
    """Point forecasts only; the log-scale residual variance corrects the back-transform."""
    u_hat = gbm.gbm_predict(model, dataset.flat_features())
    mean_y = np.exp(u_hat + 0.5 * model.residual_var)
    return PredictionSet(v_true=dataset.v, v_hat=dataset.a * mean_y, a=dataset.a)


def prediction_set(
    loaded: LoadedModel, split: DatasetSplit, part: str = 'test',
) -> tuple[PredictionSet, ForecastBatch | None]:
    dataset = _part(split, part)
    logger.debug(f"Predicting {len(dataset)} {part} instances with {loaded.kind}")
    if loaded.kind == 'tme':
        return tme_prediction_set(loaded.model, dataset)
    if loaded.kind == 'garch':
        return garch_prediction_set(loaded.model, split, part), None
    return gbm_prediction_set(loaded.model, dataset), None
