# tme_forecast/preprocess/windows.py
"""Lag windows, zero-volume filtering and time-ordered splits."""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view

from tme_forecast.errors import SourceGridMismatch, TooFewInstances
from tme_forecast.market_data import SourceId
from tme_forecast.preprocess.seasonal import SeasonalProfile, fit_seasonal_profile

DEFAULT_SPLIT = (0.7, 0.1, 0.2)


@dataclass(frozen=True)
class ModelInstance:
    """One prediction target and the windows that precede it.

    ``windows[s][i, j]`` is feature i of source s at lag position j, where
    j = 0 is interval t-h and j = h-1 is interval t-1.
    """
    t: float
    v: float
    a: float
    y: float
    windows: tuple[np.ndarray, ...] = field(repr=False)


@dataclass(frozen=True)
class WindowedDataset(Sequence):
    """Column-oriented, time-ordered collection of model instances."""
    sources: tuple[SourceId, ...]
    t: np.ndarray
    v: np.ndarray
    a: np.ndarray
    y: np.ndarray
    windows: tuple[np.ndarray, ...] = field(repr=False)

    def __len__(self) -> int:
        return int(self.t.size)

    def __getitem__(self, index):
        if isinstance(index, slice):
            return self.take(np.arange(len(self))[index])
        i = int(index)
        return ModelInstance(
            t=float(self.t[i]),
            v=float(self.v[i]),
            a=float(self.a[i]),
            y=float(self.y[i]),
            windows=tuple(w[i] for w in self.windows),
        )

    @property
    def h(self) -> int:
        return int(self.windows[0].shape[2])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(w.shape[1]) for w in self.windows)

    def take(self, indices: np.ndarray) -> 'WindowedDataset':
        indices = np.asarray(indices)
        return WindowedDataset(
            sources=self.sources,
            t=self.t[indices],
            v=self.v[indices],
            a=self.a[indices],
            y=self.y[indices],
            windows=tuple(w[indices] for w in self.windows),
        )

    def flat_features(self) -> np.ndarray:
        """(n, Σ d_s·h) matrix: source-major, then feature, then lag."""
        return np.concatenate([w.reshape(len(self), -1) for w in self.windows], axis=1)


@dataclass(frozen=True)
class DatasetSplit:
    train: WindowedDataset
    validation: WindowedDataset
    test: WindowedDataset
    fractions: tuple[float, float, float] = DEFAULT_SPLIT


def build_windows(
    grid: np.ndarray,
    features: Mapping[SourceId, np.ndarray],
    volumes: np.ndarray,
    h: int,
    profile: SeasonalProfile | None = None,
) -> WindowedDataset:
    """One instance per grid point with h earlier intervals available.

    Features of the target interval itself never enter its window. Without
    a profile the seasonal factor is 1 and y equals v.
    """
    if h < 1:
        raise ValueError("h must be >= 1")
    grid = np.asarray(grid, dtype=float)
    volumes = np.asarray(volumes, dtype=float)
    n_grid = grid.size
    if volumes.shape != (n_grid,):
        raise SourceGridMismatch(f"volumes have shape {volumes.shape}, grid has {n_grid} points")

    sources = tuple(features)
    windows = []
    for source in sources:
        matrix = np.asarray(features[source], dtype=float)
        if matrix.shape != (n_grid, source.dim):
            raise SourceGridMismatch(
                f"{source.name} features have shape {matrix.shape}, expected {(n_grid, source.dim)}"
            )
        if n_grid <= h:
            windows.append(np.empty((0, source.dim, h)))
            continue
        # view[k, i, j] = matrix[k + j, i]; the target of window k is k + h
        view = sliding_window_view(matrix, h, axis=0)[: n_grid - h]
        windows.append(np.ascontiguousarray(view))

    target = np.arange(h, max(n_grid, h))
    t = grid[target]
    v = volumes[target]
    a = np.ones_like(v) if profile is None else profile.factor(t)
    return WindowedDataset(sources=sources, t=t, v=v, a=a, y=v / a, windows=tuple(windows))


def apply_profile(dataset: WindowedDataset, profile: SeasonalProfile) -> WindowedDataset:
    a = profile.factor(dataset.t)
    return WindowedDataset(
        sources=dataset.sources,
        t=dataset.t,
        v=dataset.v,
        a=a,
        y=dataset.v / a,
        windows=dataset.windows,
    )


def filter_zero_volume(dataset: WindowedDataset) -> tuple[WindowedDataset, float]:
    """Drop instances whose target volume is zero; windows keep zero rows."""
    n = len(dataset)
    keep = dataset.v > 0
    dropped = 0.0 if n == 0 else float(n - keep.sum()) / n
    if dropped:
        logger.info(f"Dropped {n - int(keep.sum())} zero-volume targets ({dropped:.2%})")
    return dataset.take(np.flatnonzero(keep)), dropped


def split_sizes(n: int, fractions: Sequence[float] = DEFAULT_SPLIT) -> tuple[int, int, int]:
    n_train = int(np.floor(fractions[0] * n + 1e-9))
    n_val = int(np.floor(fractions[1] * n + 1e-9))
    return n_train, n_val, n - n_train - n_val


def split_dataset(
    dataset: WindowedDataset,
    fractions: Sequence[float] = DEFAULT_SPLIT,
) -> DatasetSplit:
    """Contiguous train/validation/test blocks in time order."""
    n = len(dataset)
    if n < 10:
        raise TooFewInstances(f"need at least 10 instances, got {n}")
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError(f"split fractions must be three values summing to 1, got {fractions}")
    n_train, n_val, _ = split_sizes(n, fractions)
    idx = np.arange(n)
    return DatasetSplit(
        train=dataset.take(idx[:n_train]),
        validation=dataset.take(idx[n_train:n_train + n_val]),
        test=dataset.take(idx[n_train + n_val:]),
        fractions=tuple(fractions),
    )


@dataclass(frozen=True)
class PreparedDataset:
    split: DatasetSplit
    profile: SeasonalProfile
    dropped_fraction: float


def _train_span(unfiltered: WindowedDataset, split: DatasetSplit) -> np.ndarray:
    """Unfiltered instances that precede the first held-out instance."""
    held_out = [part.t[0] for part in (split.validation, split.test) if len(part)]
    if not held_out:
        return np.ones(len(unfiltered), dtype=bool)
    return unfiltered.t < min(held_out)


def prepare_dataset(
    grid: np.ndarray,
    features: Mapping[SourceId, np.ndarray],
    volumes: np.ndarray,
    h: int,
    interval: float,
    fractions: Sequence[float] = DEFAULT_SPLIT,
) -> PreparedDataset:
    """Windows, zero filter and split, then deseasonalize with a train-only profile.

    The profile averages every interval in the training span, zero volumes
    included; only the modeling instances drop them.
    """
    windows = build_windows(grid, features, volumes, h)
    kept, dropped = filter_zero_volume(windows)
    raw = split_dataset(kept, fractions)
    span = _train_span(windows, raw)
    profile = fit_seasonal_profile(windows.t[span], windows.v[span], interval)
    split = DatasetSplit(
        train=apply_profile(raw.train, profile),
        validation=apply_profile(raw.validation, profile),
        test=apply_profile(raw.test, profile),
        fractions=raw.fractions,
    )
    logger.info(
        f"Prepared dataset: {len(split.train)}/{len(split.validation)}/{len(split.test)} "
        f"instances, h={h}, dropped {dropped:.2%}"
    )
    return PreparedDataset(split=split, profile=profile, dropped_fraction=dropped)


@dataclass(frozen=True)
class WindowScaler:
    """Per-source, per-feature z-scoring of window entries, fitted on training windows."""
    means: tuple[np.ndarray, ...]
    scales: tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, dataset: WindowedDataset) -> 'WindowScaler':
        means, scales = [], []
        for w in dataset.windows:
            means.append(w.mean(axis=(0, 2)))
            sd = w.std(axis=(0, 2))
            scales.append(np.where(sd > 0, sd, 1.0))
        return cls(tuple(means), tuple(scales))

    @classmethod
    def identity(cls, dims: Sequence[int]) -> 'WindowScaler':
        return cls(tuple(np.zeros(d) for d in dims), tuple(np.ones(d) for d in dims))

    def transform_windows(self, windows: Sequence[np.ndarray]) -> tuple[np.ndarray, ...]:
        return tuple(
            (w - m[:, None]) / s[:, None] for w, m, s in zip(windows, self.means, self.scales)
        )

    def transform(self, dataset: WindowedDataset) -> WindowedDataset:
        return WindowedDataset(
            sources=dataset.sources,
            t=dataset.t,
            v=dataset.v,
            a=dataset.a,
            y=dataset.y,
            windows=self.transform_windows(dataset.windows),
        )

    def to_dict(self) -> dict:
        return {
            'means': [m.tolist() for m in self.means],
            'scales': [s.tolist() for s in self.scales],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'WindowScaler':
        return cls(
            tuple(np.asarray(m, dtype=float) for m in data['means']),
            tuple(np.asarray(s, dtype=float) for s in data['scales']),
        )


def concat_datasets(parts: Sequence[WindowedDataset]) -> WindowedDataset:
    first = parts[0]
    return WindowedDataset(
        sources=first.sources,
        t=np.concatenate([p.t for p in parts]),
        v=np.concatenate([p.v for p in parts]),
        a=np.concatenate([p.a for p in parts]),
        y=np.concatenate([p.y for p in parts]),
        windows=tuple(
            np.concatenate([p.windows[s] for p in parts]) for s in range(len(first.windows))
        ),
    )
