# tme_forecast/evaluate/reports.py
"""Report tables, model comparison and plot-ready band data."""

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from loguru import logger

from tme_forecast.evaluate.metrics import MetricsReport, PredictionSet, QuartileReport

NA = 'NA'
METRICS = ('rmse', 'mae', 'nnll', 'iw')
# Lower is better for every reported metric
DEFAULT_DIRECTIONS = {metric: 'min' for metric in METRICS}


@dataclass(frozen=True)
class ComparisonTable:
    frame: pd.DataFrame
    best: dict[str, list[str]] = field(default_factory=dict)

    def to_markdown(self) -> str:
        columns = list(self.frame.columns)
        arrows = {'min': '↓', 'max': '↑'}
        header = '| model | ' + ' | '.join(
            f"{c.upper()} {arrows.get(DEFAULT_DIRECTIONS.get(c, 'min'), '')}".strip()
            for c in columns
        ) + ' |'
        lines = [header, '|' + '---|' * (len(columns) + 1)]
        for model, row in self.frame.iterrows():
            cells = []
            for c in columns:
                value = row[c]
                if pd.isna(value):
                    cells.append(NA)
                elif model in self.best.get(c, []):
                    cells.append(f"**{value:.6g}**")
                else:
                    cells.append(f"{value:.6g}")
            lines.append(f"| {model} | " + ' | '.join(cells) + ' |')
        return '\n'.join(lines) + '\n'


def compare(
    reports: Mapping[str, MetricsReport],
    directions: Mapping[str, str] | None = None,
) -> ComparisonTable:
    """Mark the best model per metric; missing metrics are never ranked."""
    if len(reports) < 2:
        raise ValueError("comparison needs at least two models")
    directions = {**DEFAULT_DIRECTIONS, **(directions or {})}
    frame = pd.DataFrame(
        {
            metric: [getattr(r, metric) for r in reports.values()]
            for metric in METRICS
        },
        index=pd.Index(list(reports), name='model'),
        dtype=float,
    )
    best: dict[str, list[str]] = {}
    for metric in METRICS:
        column = frame[metric].dropna()
        if column.empty:
            best[metric] = []
            continue
        target = column.min() if directions[metric] == 'min' else column.max()
        best[metric] = [model for model, value in column.items() if value == target]
    return ComparisonTable(frame=frame, best=best)


def report_rows(
    model: str,
    report: MetricsReport,
    quartiles: QuartileReport | None = None,
) -> list[dict]:
    """Long-form rows ``model,metric,value,quartile``; missing values become NA."""
    rows = [
        {
            'model': model,
            'metric': metric,
            'value': NA if getattr(report, metric) is None else getattr(report, metric),
            'quartile': '',
        }
        for metric in METRICS
    ]
    if quartiles is not None:
        for q, group in enumerate(quartiles.quartiles, start=1):
            for metric in ('rmse', 'rel_rmse', 'mae', 'mape'):
                rows.append({
                    'model': model,
                    'metric': metric,
                    'value': getattr(group, metric),
                    'quartile': f"Q{q}",
                })
    return rows


def write_report(rows: Sequence[dict], path: Path | str) -> None:
    pd.DataFrame(rows, columns=['model', 'metric', 'value', 'quartile']).to_csv(path, index=False)
    logger.info(f"Wrote {len(rows)} report rows to {path}")


def band_frame(
    t: np.ndarray,
    pred: PredictionSet,
    gate: np.ndarray | None = None,
    k: float = 2.0,
) -> pd.DataFrame:
    """``t,v_true,mean,lo,hi,gate_1..gate_S`` with the lower band truncated at zero."""
    sd = pred.sd_v
    mean = np.asarray(pred.v_hat, dtype=float)
    df = pd.DataFrame({
        't': np.asarray(t).astype(np.int64),
        'v_true': pred.v_true,
        'mean': mean,
        'lo': np.maximum(0.0, mean - k * sd),
        'hi': mean + k * sd,
    })
    if gate is not None:
        for s in range(gate.shape[1]):
            df[f"gate_{s + 1}"] = gate[:, s]
    return df


def source_band_frame(
    t: np.ndarray,
    a: np.ndarray,
    source_mean: np.ndarray,
    source_var: np.ndarray,
    gate: np.ndarray,
    source_names: Sequence[str],
    k: float = 2.0,
) -> pd.DataFrame:
    """Per-source bands on the raw scale: ``t,source,mean,lo,hi,gate``."""
    frames = []
    for s, name in enumerate(source_names):
        mean = a * source_mean[:, s]
        sd = a * np.sqrt(source_var[:, s])
        frames.append(pd.DataFrame({
            't': np.asarray(t).astype(np.int64),
            'source': name,
            'mean': mean,
            'lo': np.maximum(0.0, mean - k * sd),
            'hi': mean + k * sd,
            'gate': gate[:, s],
        }))
    return pd.concat(frames, ignore_index=True).sort_values(['t', 'source'], kind='stable')
