# tme_forecast/tme/model_io.py
"""TME model files (JSON) and forecast CSVs."""

import json
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from loguru import logger

from tme_forecast.errors import IncompatibleManifest
from tme_forecast.preprocess import SeasonalProfile, WindowScaler, reseasonalize_mean_var
from tme_forecast.tme.params import TmeParams
from tme_forecast.tme.predict import ForecastBatch
from tme_forecast.tme.training import Ensemble, MemberProvenance, TrainConfig

FIELD_ORDER = [
    'per source: L_mu, R_mu, b_mu, L_sigma, R_sigma, b_sigma',
    'then per source: L_z, R_z, b_z',
]


def ensemble_to_dict(
    ensemble: Ensemble,
    manifest: dict[str, Any],
    config_hash: str = "",
) -> dict[str, Any]:
    return {
        'model': 'tme',
        'manifest': {
            'S': ensemble.S,
            'd_s': list(ensemble.dims),
            'h': ensemble.h,
            'horizon': manifest.get('horizon'),
            'sources': manifest.get('sources', []),
        },
        'field_order': FIELD_ORDER,
        'members': [member.flatten().tolist() for member in ensemble.members],
        'provenance': [
            {'trajectory': p.trajectory, 'epoch': p.epoch, 'seed': p.seed}
            for p in ensemble.provenance
        ],
        'scaler': ensemble.scaler.to_dict(),
        'config': ensemble.config.to_dict() if ensemble.config else None,
        'config_hash': config_hash,
        'dataset_hash': manifest.get('config_hash', ''),
    }


def save_ensemble(
    ensemble: Ensemble,
    path: Path | str,
    manifest: dict[str, Any],
    config_hash: str = "",
) -> None:
    data = ensemble_to_dict(ensemble, manifest, config_hash)
    Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))
    logger.info(f"Saved {ensemble.M}-member ensemble to {path}")


def load_ensemble(path: Path | str) -> tuple[Ensemble, dict[str, Any]]:
    """Return the ensemble and the raw file contents."""
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"File not found: {path}")
    data = json.loads(p.read_text())
    if data.get('model') != 'tme':
        raise IncompatibleManifest(f"{path} is not a TME model file")

    dims, h = data['manifest']['d_s'], int(data['manifest']['h'])
    members = tuple(TmeParams.unflatten(np.asarray(m), dims, h) for m in data['members'])
    provenance = tuple(MemberProvenance(**p) for p in data['provenance'])
    config = TrainConfig.from_dict(data['config']) if data.get('config') else None
    ensemble = Ensemble(
        members=members,
        provenance=provenance,
        scaler=WindowScaler.from_dict(data['scaler']),
        config=config,
    )
    return ensemble, data


def forecast_frame(batch: ForecastBatch, profile: SeasonalProfile) -> pd.DataFrame:
    """Forecast table with y-scale moments, gates and raw-scale mean/sd."""
    mean_v, var_v = reseasonalize_mean_var(batch.mean, batch.var_total, batch.t, profile)
    df = pd.DataFrame({
        't': batch.t.astype(np.int64),
        'mean_y': batch.mean,
        'var_total_y': batch.var_total,
        'var_aleatoric_y': batch.var_aleatoric,
        'var_epistemic_y': batch.var_epistemic,
    })
    for s in range(batch.gate_mean.shape[1]):
        df[f"gate_{s + 1}"] = batch.gate_mean[:, s]
    df['mean_v'] = mean_v
    df['sd_v'] = np.sqrt(var_v)
    return df


def write_forecasts(batch: ForecastBatch, profile: SeasonalProfile, path: Path | str) -> None:
    forecast_frame(batch, profile).to_csv(path, index=False, float_format='%.17g')
    logger.info(f"Wrote {len(batch)} forecasts to {path}")
