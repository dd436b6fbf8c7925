# tme_forecast/tme/predict.py
"""Ensemble predictive moments, uncertainty split and pointwise likelihood."""

from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from tme_forecast.errors import NegativeVariance, ShapeMismatch
from tme_forecast.preprocess import ModelInstance, WindowedDataset
from tme_forecast.tme.model import (
    check_targets,
    component_moments,
    lognormal_logpdf,
    lognormal_moments,
)
from tme_forecast.tme.training import Ensemble

EPISTEMIC_FLOOR = 1e-12


@dataclass(frozen=True)
class Forecast:
    """Predictive distribution of y for one instance.

    ``gate_probs`` is (M, S); ``source_mean``/``source_var`` describe each
    source's component pooled over members.
    """
    mean: float
    var_total: float
    var_aleatoric: float
    var_epistemic: float
    gate_probs: np.ndarray
    gate_mean: np.ndarray
    source_mean: np.ndarray
    source_var: np.ndarray


@dataclass(frozen=True)
class ForecastBatch:
    t: np.ndarray
    mean: np.ndarray
    var_total: np.ndarray
    var_aleatoric: np.ndarray
    var_epistemic: np.ndarray
    gate_mean: np.ndarray
    source_mean: np.ndarray
    source_var: np.ndarray

    def __len__(self) -> int:
        return int(self.mean.size)

    @property
    def sd(self) -> np.ndarray:
        return np.sqrt(self.var_total)


def combine_moments(probs: np.ndarray, means: np.ndarray, variances: np.ndarray):
    """Mixture moments over the trailing (M, S) axes.

    Returns (mean, aleatoric, epistemic, total) with total = aleatoric + epistemic.
    """
    probs = np.asarray(probs, dtype=float)
    means = np.asarray(means, dtype=float)
    variances = np.asarray(variances, dtype=float)
    if not probs.shape == means.shape == variances.shape or probs.ndim < 2:
        raise ShapeMismatch("probs, means and variances must share an (..., M, S) shape")

    mean = (probs * means).sum(axis=-1).mean(axis=-1)
    aleatoric = (probs * variances).sum(axis=-1).mean(axis=-1)
    second = (probs * means * means).sum(axis=-1).mean(axis=-1)
    epistemic = second - mean * mean

    floor = -EPISTEMIC_FLOOR * np.maximum(1.0, second)
    if np.any(epistemic < floor):
        raise NegativeVariance(f"negative epistemic variance {float(np.min(epistemic)):.3e}")
    epistemic = np.where(epistemic < 0, 0.0, epistemic)
    return mean, aleatoric, epistemic, aleatoric + epistemic


def _member_terms(ensemble: Ensemble, windows: list[np.ndarray]):
    """mu, sigma2 and gate probabilities stacked as (n, M, S)."""
    scaled = list(ensemble.scaler.transform_windows(windows))
    parts = [component_moments(member, scaled) for member in ensemble.members]
    mu = np.stack([p[0] for p in parts], axis=1)
    sigma2 = np.stack([p[1] for p in parts], axis=1)
    probs = np.stack([p[2] for p in parts], axis=1)
    return mu, sigma2, probs


def _pooled_source_moments(means: np.ndarray, variances: np.ndarray):
    """Per-source mean and variance of the equal-weight mixture over members."""
    source_mean = means.mean(axis=-2)
    second = (variances + means * means).mean(axis=-2)
    return source_mean, np.maximum(second - source_mean * source_mean, 0.0)


def predict_dataset(ensemble: Ensemble, dataset: WindowedDataset) -> ForecastBatch:
    if dataset.dims != ensemble.dims or dataset.h != ensemble.h:
        raise ShapeMismatch(
            f"dataset dims {dataset.dims}/h={dataset.h} do not match "
            f"ensemble {ensemble.dims}/h={ensemble.h}"
        )
    mu, sigma2, probs = _member_terms(ensemble, list(dataset.windows))
    means, variances = lognormal_moments(mu, sigma2)
    mean, aleatoric, epistemic, total = combine_moments(probs, means, variances)
    source_mean, source_var = _pooled_source_moments(means, variances)
    return ForecastBatch(
        t=np.asarray(dataset.t, dtype=float),
        mean=mean,
        var_total=total,
        var_aleatoric=aleatoric,
        var_epistemic=epistemic,
        gate_mean=probs.mean(axis=1),
        source_mean=source_mean,
        source_var=source_var,
    )


def predict(ensemble: Ensemble, instance: ModelInstance) -> Forecast:
    windows = [np.asarray(w, dtype=float)[None] for w in instance.windows]
    if tuple(w.shape[1] for w in windows) != ensemble.dims or windows[0].shape[2] != ensemble.h:
        raise ShapeMismatch("instance windows do not match the ensemble")
    mu, sigma2, probs = _member_terms(ensemble, windows)
    means, variances = lognormal_moments(mu, sigma2)
    mean, aleatoric, epistemic, total = combine_moments(probs, means, variances)
    source_mean, source_var = _pooled_source_moments(means, variances)
    return Forecast(
        mean=float(mean[0]),
        var_total=float(total[0]),
        var_aleatoric=float(aleatoric[0]),
        var_epistemic=float(epistemic[0]),
        gate_probs=probs[0],
        gate_mean=probs[0].mean(axis=0),
        source_mean=source_mean[0],
        source_var=source_var[0],
    )


def _mixture_nll(ensemble: Ensemble, windows: list[np.ndarray], y: np.ndarray) -> np.ndarray:
    check_targets(y)
    mu, sigma2, probs = _member_terms(ensemble, windows)
    log_terms = np.log(probs) + lognormal_logpdf(y[:, None, None], mu, sigma2)
    return -(logsumexp(log_terms, axis=(1, 2)) - np.log(ensemble.M))


def nll_point(ensemble: Ensemble, instance: ModelInstance, scale: float = 1.0) -> float:
    """−ln of the ensemble mixture density at y; ``scale`` = a gives the raw-volume NLL."""
    windows = [np.asarray(w, dtype=float)[None] for w in instance.windows]
    nll = _mixture_nll(ensemble, windows, np.array([instance.y], dtype=float))
    return float(nll[0] + np.log(scale))


def nll_dataset(ensemble: Ensemble, dataset: WindowedDataset) -> np.ndarray:
    """Per-instance y-scale NLL."""
    return _mixture_nll(ensemble, list(dataset.windows), np.asarray(dataset.y, dtype=float))
