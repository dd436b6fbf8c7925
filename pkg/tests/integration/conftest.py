# tests/integration/conftest.py
"""Pytest configuration for integration tests: one small synthetic pipeline per session."""

from pathlib import Path

import pytest

from tme_forecast.cli import CLI

RUN_CONFIG = """\
seed: 11
data:
  horizon: 10m
  window_h: 3
tme:
  batch_size: 32
  n_trajectories: 2
  iterates_per_trajectory: 2
  burn_in_epochs: 1
  max_epochs: 4
garch:
  p_range: [1, 2]
  q_range: [1, 1]
gbm:
  n_draws: 2
  n_trees: [5, 10]
  max_depth: [4, 5]
"""


@pytest.fixture(scope="session")
def run_config(tmp_path_factory) -> Path:
    """Small-sample settings shared by every CLI call."""
    path = tmp_path_factory.mktemp("config") / "run.yaml"
    path.write_text(RUN_CONFIG)
    return path


@pytest.fixture(scope="session")
def make_cli(run_config):
    """Build a CLI writing into the given directory."""
    def _make(out_dir: Path, **flags) -> CLI:
        return CLI(config=str(run_config), out_dir=str(out_dir), **flags)
    return _make


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory, make_cli) -> dict:
    """Simulated market files turned into features and a dataset."""
    root = tmp_path_factory.mktemp("pipeline")
    cli = make_cli(root / "work")
    market = cli.simulate(kind='volume', days=6, out=str(root / "market"))
    features = cli.features(
        market['target_trades'], market['target_book'],
        market['external_trades'], market['external_book'],
        out=str(root / "features"),
    )
    summary = cli.dataset(features_dir=str(root / "features"), out=str(root / "dataset"))
    return {
        'root': root,
        'cli': cli,
        'market': market,
        'features': features,
        'dataset_dir': root / "dataset",
        'summary': summary,
    }


@pytest.fixture(scope="session")
def trained(pipeline) -> dict[str, Path]:
    """All three models trained on the pipeline dataset."""
    cli, dataset_dir = pipeline['cli'], str(pipeline['dataset_dir'])
    return {kind: Path(cli.train(model=kind, dataset_dir=dataset_dir)) for kind in ('tme', 'garch', 'gbm')}
