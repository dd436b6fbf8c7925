# tme_forecast/preprocess/__init__.py
"""Deseasonalization, lag windows, splits and dataset files."""

from tme_forecast.preprocess.dataset_io import read_dataset, read_manifest, write_dataset
from tme_forecast.preprocess.seasonal import (
    SeasonalProfile,
    deseasonalize,
    fit_seasonal_profile,
    intraday_slot,
    reseasonalize_mean_var,
    slots_per_day,
)
from tme_forecast.preprocess.windows import (
    DatasetSplit,
    ModelInstance,
    PreparedDataset,
    WindowedDataset,
    WindowScaler,
    apply_profile,
    build_windows,
    concat_datasets,
    filter_zero_volume,
    prepare_dataset,
    split_dataset,
    split_sizes,
)

__all__ = [
    "DatasetSplit",
    "ModelInstance",
    "PreparedDataset",
    "SeasonalProfile",
    "WindowScaler",
    "WindowedDataset",
    "apply_profile",
    "build_windows",
    "concat_datasets",
    "deseasonalize",
    "filter_zero_volume",
    "fit_seasonal_profile",
    "intraday_slot",
    "prepare_dataset",
    "read_dataset",
    "read_manifest",
    "reseasonalize_mean_var",
    "slots_per_day",
    "split_dataset",
    "split_sizes",
    "write_dataset",
]
