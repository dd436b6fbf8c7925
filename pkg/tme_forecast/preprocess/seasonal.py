# tme_forecast/preprocess/seasonal.py
"""Intraday seasonal profile: a_I is the training-set mean volume of slot I."""

from dataclasses import dataclass, field

import numpy as np
from loguru import logger

from tme_forecast.errors import EmptySeasonalSlot

SECONDS_PER_DAY = 86400


def slots_per_day(interval_length: float) -> int:
    n = SECONDS_PER_DAY / interval_length
    if n != int(n):
        raise ValueError(f"interval {interval_length}s does not divide a day")
    return int(n)


def intraday_slot(t: np.ndarray | float, interval_length: float) -> np.ndarray:
    """I(t) = floor((t mod day) / interval)."""
    t = np.asarray(t, dtype=float)
    return np.floor(np.mod(t, SECONDS_PER_DAY) / interval_length).astype(np.int64)


@dataclass(frozen=True)
class SeasonalProfile:
    interval_length: float
    values: np.ndarray = field(repr=False)
    fitted_on: str = ""

    def factor(self, t: np.ndarray | float) -> np.ndarray:
        """a_{I(t)} for each timestamp."""
        return self.values[intraday_slot(t, self.interval_length)]

    def to_dict(self) -> dict:
        return {
            'interval_length': self.interval_length,
            'values': self.values.tolist(),
            'fitted_on': self.fitted_on,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'SeasonalProfile':
        return cls(
            interval_length=float(data['interval_length']),
            values=np.asarray(data['values'], dtype=float),
            fitted_on=data.get('fitted_on', ''),
        )


def fit_seasonal_profile(
    t: np.ndarray,
    v: np.ndarray,
    interval_length: float,
    fitted_on: str = "",
) -> SeasonalProfile:
    """Mean volume per intraday slot over the training observations."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    n_slots = slots_per_day(interval_length)
    slots = intraday_slot(t, interval_length)
    totals = np.bincount(slots, weights=v, minlength=n_slots)
    counts = np.bincount(slots, minlength=n_slots)

    empty = np.flatnonzero((counts == 0) | (totals <= 0))
    if empty.size:
        raise EmptySeasonalSlot(int(empty[0]))

    values = totals / counts
    if not fitted_on and t.size:
        fitted_on = f"{int(t.min())}-{int(t.max())}"
    logger.debug(f"Fitted seasonal profile with {n_slots} slots on {t.size} observations")
    return SeasonalProfile(interval_length=interval_length, values=values, fitted_on=fitted_on)


def deseasonalize(v: np.ndarray | float, t: np.ndarray | float, profile: SeasonalProfile):
    """y = v / a_{I(t)}."""
    return np.asarray(v, dtype=float) / profile.factor(t)


def reseasonalize_mean_var(
    mean_y: np.ndarray | float,
    var_y: np.ndarray | float,
    t: np.ndarray | float,
    profile: SeasonalProfile,
) -> tuple[np.ndarray, np.ndarray]:
    """Back to raw scale: mean_v = a·mean_y, var_v = a²·var_y."""
    a = profile.factor(t)
    return a * np.asarray(mean_y, dtype=float), a * a * np.asarray(var_y, dtype=float)
