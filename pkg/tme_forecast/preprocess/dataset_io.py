# tme_forecast/preprocess/dataset_io.py
"""Dataset files: long-form CSV of instances plus a JSON manifest.

CSV columns are ``t,v,a,y,src,lag,f_index,value`` with one row per
(instance, source, lag, feature). ``lag`` counts back from the target, so
lag 1 is interval t-1 and lag h is interval t-h; ``f_index`` starts at 1.
"""

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from loguru import logger

from tme_forecast.errors import IncompatibleManifest, SourceGridMismatch
from tme_forecast.market_data import SourceId
from tme_forecast.preprocess.seasonal import SeasonalProfile
from tme_forecast.preprocess.windows import (
    DatasetSplit,
    PreparedDataset,
    WindowedDataset,
    concat_datasets,
)

DATASET_COLUMNS = ['t', 'v', 'a', 'y', 'src', 'lag', 'f_index', 'value']
DATASET_FILE = 'dataset.csv'
MANIFEST_FILE = 'manifest.json'


def _long_frame(dataset: WindowedDataset) -> pd.DataFrame:
    n, h = len(dataset), dataset.h
    blocks = []
    for source, window in zip(dataset.sources, dataset.windows):
        d = window.shape[1]
        # window[k, i, j]: feature i at lag position j (j = h-1 is the latest)
        f_index = np.tile(np.repeat(np.arange(1, d + 1), h), n)
        lag = np.tile(np.tile(np.arange(h, 0, -1), d), n)
        rows = np.repeat(np.arange(n), d * h)
        blocks.append(pd.DataFrame({
            'row': rows,
            'src': source.name,
            'lag': lag,
            'f_index': f_index,
            'value': window.reshape(-1),
        }))
    df = pd.concat(blocks, ignore_index=True)
    df = df.sort_values('row', kind='stable')
    row = df.pop('row').to_numpy()
    df.insert(0, 'y', dataset.y[row])
    df.insert(0, 'a', dataset.a[row])
    df.insert(0, 'v', dataset.v[row])
    df.insert(0, 't', dataset.t[row].astype(np.int64))
    return df[DATASET_COLUMNS]


def build_manifest(
    prepared: PreparedDataset,
    horizon: str,
    interval: float,
    config_hash: str,
) -> dict[str, Any]:
    split = prepared.split
    parts = {'train': split.train, 'validation': split.validation, 'test': split.test}
    return {
        'h': split.train.h,
        'horizon': horizon,
        'interval': interval,
        'S': len(split.train.sources),
        'sources': [s.name for s in split.train.sources],
        'd_s': list(split.train.dims),
        'split': {
            'fractions': list(split.fractions),
            **{
                name: {
                    'n': len(part),
                    't_start': float(part.t[0]) if len(part) else None,
                    't_end': float(part.t[-1]) if len(part) else None,
                }
                for name, part in parts.items()
            },
        },
        'profile': prepared.profile.to_dict(),
        'dropped_fraction': prepared.dropped_fraction,
        'config_hash': config_hash,
    }


def write_dataset(
    prepared: PreparedDataset,
    out_dir: Path | str,
    horizon: str,
    interval: float,
    config_hash: str,
) -> dict[str, Any]:
    """Write dataset.csv and manifest.json to out_dir; returns the manifest."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    split = prepared.split
    everything = concat_datasets([split.train, split.validation, split.test])
    _long_frame(everything).to_csv(out / DATASET_FILE, index=False, float_format='%.17g')

    manifest = build_manifest(prepared, horizon, interval, config_hash)
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    logger.info(f"Wrote {len(everything)} instances to {out / DATASET_FILE}")
    return manifest


def read_manifest(path: Path | str) -> dict[str, Any]:
    p = Path(path)
    if p.is_dir():
        p = p / MANIFEST_FILE
    if not p.exists():
        raise FileNotFoundError(f"File not found: {p}")
    manifest = json.loads(p.read_text())
    for key in ('h', 'sources', 'd_s', 'split', 'profile', 'config_hash'):
        if key not in manifest:
            raise IncompatibleManifest(f"manifest {p} lacks '{key}'")
    return manifest


def read_dataset(dataset_dir: Path | str) -> tuple[DatasetSplit, SeasonalProfile, dict[str, Any]]:
    """Load a dataset directory written by ``write_dataset``."""
    root = Path(dataset_dir)
    manifest = read_manifest(root)
    csv_path = root / DATASET_FILE
    if not csv_path.exists():
        raise FileNotFoundError(f"File not found: {csv_path}")

    df = pd.read_csv(csv_path)
    if list(df.columns) != DATASET_COLUMNS:
        raise SourceGridMismatch(f"{csv_path} does not have columns {DATASET_COLUMNS}")

    h = int(manifest['h'])
    sources = tuple(SourceId.from_name(name) for name in manifest['sources'])
    src_pos = {name: k for k, name in enumerate(manifest['sources'])}
    df['_src'] = df['src'].map(src_pos)
    df = df.sort_values(['t', '_src', 'f_index', 'lag'], ascending=[True, True, True, False])

    instances = df.drop_duplicates('t')
    n = len(instances)
    windows = []
    for k, (source, d) in enumerate(zip(sources, manifest['d_s'])):
        values = df.loc[df['_src'] == k, 'value'].to_numpy(dtype=float)
        if values.size != n * d * h:
            raise SourceGridMismatch(f"{source.name}: expected {n * d * h} values, got {values.size}")
        windows.append(values.reshape(n, d, h))

    everything = WindowedDataset(
        sources=sources,
        t=instances['t'].to_numpy(dtype=float),
        v=instances['v'].to_numpy(dtype=float),
        a=instances['a'].to_numpy(dtype=float),
        y=instances['y'].to_numpy(dtype=float),
        windows=tuple(windows),
    )
    info = manifest['split']
    n_train, n_val = info['train']['n'], info['validation']['n']
    idx = np.arange(n)
    split = DatasetSplit(
        train=everything.take(idx[:n_train]),
        validation=everything.take(idx[n_train:n_train + n_val]),
        test=everything.take(idx[n_train + n_val:]),
        fractions=tuple(info['fractions']),
    )
    logger.info(f"Loaded dataset {root}: {n} instances, sources {manifest['sources']}")
    return split, SeasonalProfile.from_dict(manifest['profile']), manifest
