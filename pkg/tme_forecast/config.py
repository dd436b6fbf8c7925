# tme_forecast/config.py
"""Configuration management: built-in defaults, config file, environment, flags."""

import hashlib
import json
import os
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from omegaconf import DictConfig, OmegaConf

from tme_forecast.errors import ConfigError

# Load .env from project root
_env_path = Path(__file__).parent.parent / ".env"
if _env_path.exists():
    load_dotenv(_env_path)


HORIZONS = {'1m': 60, '5m': 300, '10m': 600}

DEFAULTS: dict[str, Any] = {
    'seed': 0,
    'out_dir': 'out',
    'n_jobs': 1,
    'data': {
        'horizon': '1m',
        'window_h': 10,
        'split': [0.7, 0.1, 0.2],
        'ts_ms': False,
        'quantile_fracs': [0.01, 0.05, 0.10],
    },
    'tme': {
        'learning_rate': 0.001,
        'batch_size': 64,
        'l2_lambda': 0.1,
        'l2_on_bias': True,
        'n_trajectories': 5,
        'iterates_per_trajectory': 4,
        'burn_in_epochs': 5,
        'max_epochs': 30,
        'n_draws': 0,
    },
    'garch': {
        'p_range': [1, 5],
        'q_range': [1, 5],
        'exog': False,
    },
    'gbm': {
        'n_draws': 10,
        'n_trees': [100, 1000],
        'max_features_frac': [0.1, 1.0],
        'min_samples_leaf': [2, 9],
        'max_depth': [4, 9],
        'learning_rate': [0.005, 0.05],
    },
}


def get_env_overrides() -> dict[str, Any]:
    """Read TME_FORECAST_* environment variables."""
    overrides: dict[str, Any] = {}
    if (seed := os.getenv("TME_FORECAST_SEED")) is not None:
        overrides['seed'] = int(seed)
    if (out_dir := os.getenv("TME_FORECAST_OUT_DIR")) is not None:
        overrides['out_dir'] = out_dir
    if (n_jobs := os.getenv("TME_FORECAST_N_JOBS")) is not None:
        overrides['n_jobs'] = int(n_jobs)
    return overrides


def load_config(
    path: str | Path | None = None,
    overrides: dict[str, Any] | None = None,
) -> DictConfig:
    """Resolve the run configuration.

    Layers, later wins: defaults, config file (JSON or YAML), environment,
    explicit overrides (CLI flags). ``None`` values in overrides are ignored.
    """
    layers = [OmegaConf.create(DEFAULTS)]

    if path is not None:
        p = Path(path)
        if not p.exists():
            raise FileNotFoundError(f"File not found: {path}")
        try:
            if p.suffix == '.json':
                layers.append(OmegaConf.create(json.loads(p.read_text())))
            else:
                layers.append(OmegaConf.load(p))
        except Exception as e:
            raise ConfigError(f"Cannot read config {path}: {e}") from e

    layers.append(OmegaConf.create(get_env_overrides()))
    if overrides:
        layers.append(OmegaConf.create({k: v for k, v in overrides.items() if v is not None}))

    cfg = OmegaConf.merge(*layers)
    validate_config(cfg)
    return cfg


def validate_config(cfg: DictConfig) -> None:
    """Reject values outside the declared domains."""
    if cfg.data.horizon not in HORIZONS:
        raise ConfigError(f"horizon must be one of {sorted(HORIZONS)}, got {cfg.data.horizon}")
    if int(cfg.data.window_h) < 1:
        raise ConfigError("window_h must be >= 1")
    for name in ('p_range', 'q_range'):
        lo, hi = cfg.garch[name]
        if not 1 <= lo <= hi <= 10:
            raise ConfigError(f"garch.{name} must lie within [1, 10], got {[lo, hi]}")
    if int(cfg.n_jobs) == 0:
        raise ConfigError("n_jobs must be nonzero")


def horizon_seconds(horizon: str) -> int:
    try:
        return HORIZONS[horizon]
    except KeyError as e:
        raise ConfigError(f"Unknown horizon: {horizon}") from e


def config_hash(cfg: DictConfig | dict[str, Any]) -> str:
    """SHA-256 of the resolved config serialized with sorted keys."""
    if isinstance(cfg, DictConfig):
        cfg = OmegaConf.to_container(cfg, resolve=True)
    content = json.dumps(cfg, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(content.encode()).hexdigest()


def section_hash(cfg: DictConfig, *keys: str) -> str:
    """Hash of a subset of top-level sections (e.g. what a dataset depends on)."""
    container = OmegaConf.to_container(cfg, resolve=True)
    return config_hash({k: container[k] for k in keys})
