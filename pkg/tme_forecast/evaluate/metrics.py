# tme_forecast/evaluate/metrics.py
"""Raw-volume scale metrics, overall and per quartile of the true volume."""

from dataclasses import dataclass

import numpy as np

from tme_forecast.errors import (
    EmptySet,
    MissingLikelihood,
    MissingSd,
    ShapeMismatch,
    ZeroTrueVolume,
)


@dataclass(frozen=True)
class PredictionSet:
    """Per test instance: true and predicted raw volume, y-scale sd and NLL, seasonal factor."""
    v_true: np.ndarray
    v_hat: np.ndarray
    a: np.ndarray
    sd_hat: np.ndarray | None = None
    nll: np.ndarray | None = None

    def __post_init__(self):
        n = np.shape(self.v_true)[0]
        for name in ('v_hat', 'a', 'sd_hat', 'nll'):
            value = getattr(self, name)
            if value is not None and np.shape(value) != (n,):
                raise ShapeMismatch(f"{name} has shape {np.shape(value)}, expected ({n},)")

    def __len__(self) -> int:
        return int(np.shape(self.v_true)[0])

    def subset(self, mask: np.ndarray) -> 'PredictionSet':
        return PredictionSet(
            v_true=np.asarray(self.v_true)[mask],
            v_hat=np.asarray(self.v_hat)[mask],
            a=np.asarray(self.a)[mask],
            sd_hat=None if self.sd_hat is None else np.asarray(self.sd_hat)[mask],
            nll=None if self.nll is None else np.asarray(self.nll)[mask],
        )

    @property
    def sd_v(self) -> np.ndarray:
        if self.sd_hat is None:
            raise MissingSd("prediction set has no standard deviations")
        return np.asarray(self.sd_hat, dtype=float) * np.asarray(self.a, dtype=float)


@dataclass(frozen=True)
class MetricsReport:
    rmse: float
    mae: float
    nnll: float | None
    iw: float | None
    n: int


@dataclass(frozen=True)
class QuartileMetrics:
    n: int
    rmse: float
    rel_rmse: float
    mae: float
    mape: float


@dataclass(frozen=True)
class QuartileReport:
    boundaries: tuple[float, float, float]
    quartiles: tuple[QuartileMetrics, ...]
    membership: np.ndarray


def _errors(pred: PredictionSet) -> np.ndarray:
    if len(pred) == 0:
        raise EmptySet("empty prediction set")
    return np.asarray(pred.v_true, dtype=float) - np.asarray(pred.v_hat, dtype=float)


def rmse(pred: PredictionSet) -> float:
    err = _errors(pred)
    return float(np.sqrt(np.mean(err * err)))


def mae(pred: PredictionSet) -> float:
    return float(np.mean(np.abs(_errors(pred))))


def nnll(pred: PredictionSet) -> float:
    """Mean raw-volume NLL: y-scale NLL plus ln a."""
    if len(pred) == 0:
        raise EmptySet("empty prediction set")
    if pred.nll is None or np.any(~np.isfinite(pred.nll)):
        raise MissingLikelihood("prediction set has no likelihoods")
    return float(np.mean(np.asarray(pred.nll) + np.log(pred.a)))


def iw(pred: PredictionSet) -> float:
    """Mean raw-volume predictive standard deviation."""
    if len(pred) == 0:
        raise EmptySet("empty prediction set")
    return float(np.mean(pred.sd_v))


def rel_metrics(pred: PredictionSet) -> tuple[float, float]:
    """(RelRMSE, MAPE) of the errors relative to the true volume."""
    err = _errors(pred)
    v = np.asarray(pred.v_true, dtype=float)
    if np.any(v <= 0):
        raise ZeroTrueVolume(f"{int(np.sum(v <= 0))} non-positive true volumes")
    rel = err / v
    return float(np.sqrt(np.mean(rel * rel))), float(np.mean(np.abs(rel)))


def band_coverage(pred: PredictionSet, k: float = 2.0) -> float:
    """Share of true volumes inside [max(0, mean − k·sd), mean + k·sd]."""
    if len(pred) == 0:
        raise EmptySet("empty prediction set")
    sd = pred.sd_v
    v_hat = np.asarray(pred.v_hat, dtype=float)
    lo = np.maximum(0.0, v_hat - k * sd)
    hi = v_hat + k * sd
    v = np.asarray(pred.v_true, dtype=float)
    return float(np.mean((v >= lo) & (v <= hi)))


def metrics_report(pred: PredictionSet) -> MetricsReport:
    """All overall metrics; NNLL and IW are None when the model gives no distribution."""
    return MetricsReport(
        rmse=rmse(pred),
        mae=mae(pred),
        nnll=nnll(pred) if pred.nll is not None else None,
        iw=iw(pred) if pred.sd_hat is not None else None,
        n=len(pred),
    )


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


def quartile_membership(v_true: np.ndarray) -> tuple[np.ndarray, tuple[float, float, float]]:
    """Quartile index 0..3 per instance; values equal to a boundary go to the lower group."""
    v = np.asarray(v_true, dtype=float)
    n = v.size
    ordered = np.sort(v)
    cuts = [_ceil_div(k * n, 4) for k in (1, 2, 3)]
    boundaries = tuple(float(ordered[c - 1]) for c in cuts)
    return np.searchsorted(np.asarray(boundaries), v, side='left'), boundaries


def quartile_report(pred: PredictionSet) -> QuartileReport:
    if len(pred) < 4:
        raise EmptySet(f"quartile report needs at least 4 instances, got {len(pred)}")
    membership, boundaries = quartile_membership(pred.v_true)
    groups = []
    for q in range(4):
        part = pred.subset(membership == q)
        if len(part) == 0:
            groups.append(QuartileMetrics(0, *(float('nan'),) * 4))
            continue
        rel_rmse, mape = rel_metrics(part)
        groups.append(QuartileMetrics(len(part), rmse(part), rel_rmse, mae(part), mape))
    return QuartileReport(boundaries=boundaries, quartiles=tuple(groups), membership=membership)
