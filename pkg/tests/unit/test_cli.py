# tests/unit/test_cli.py
"""Unit tests for CLI interface."""

import pytest

from tme_forecast.cli import CLI
from tme_forecast.errors import ConfigError, IncompatibleManifest


@pytest.fixture
def cli(tmp_path, monkeypatch):
    monkeypatch.delenv("TME_FORECAST_OUT_DIR", raising=False)
    return CLI(out_dir=str(tmp_path / "out"), seed=3)


class TestCLIInit:
    """Tests for CLI initialization."""

    def test_flags_override(self, cli, tmp_path):
        """Test global flags land in the resolved config."""
        assert cli.cfg.seed == 3
        assert cli.cfg.out_dir == str(tmp_path / "out")
        assert cli.cfg.data.horizon == '1m'

    def test_nested_flags(self, tmp_path):
        """Test horizon and ts_ms go to the data section."""
        cli = CLI(out_dir=str(tmp_path), horizon='10m', ts_ms=True)
        assert cli.cfg.data.horizon == '10m'
        assert cli.cfg.data.ts_ms is True

    def test_bad_horizon(self, tmp_path):
        """Test an unknown horizon fails at construction."""
        with pytest.raises(ConfigError):
            CLI(out_dir=str(tmp_path), horizon='3m')

    def test_out_dir_created(self, cli):
        """Test the output directory is created on first use."""
        assert cli.out_dir.is_dir()


class TestCLIHelpers:
    """Tests for CLI helper methods."""

    @pytest.mark.parametrize("value, expected", [
        (None, True), (False, False), ('on', True), ('OFF', False), ('yes', True), ('0', False),
    ])
    def test_on_off(self, value, expected):
        """Test on/off parsing falls back to the default for None."""
        assert CLI._on_off(value, True) is expected

    def test_on_off_invalid(self):
        """Test unrecognized switches raise ConfigError."""
        with pytest.raises(ConfigError):
            CLI._on_off('maybe', False)

    def test_unique_name(self):
        """Test repeated stems get numeric suffixes."""
        taken = {'model_tme': 1, 'model_tme_2': 2}
        assert CLI._unique_name('model_gbm', taken) == 'model_gbm'
        assert CLI._unique_name('model_tme', taken) == 'model_tme_3'

    def test_check_hash(self, cli):
        """Test a model trained on another dataset is refused."""
        cli._check_hash('m.json', 'abc', {'config_hash': 'abc'})
        with pytest.raises(IncompatibleManifest):
            cli._check_hash('m.json', 'abc', {'config_hash': 'def'})

    def test_model_path(self, cli):
        """Test model files are named by kind inside the output directory."""
        assert cli._model_path('garch') == cli.out_dir / "model_garch.json"


class TestCLIErrors:
    """Tests for argument validation."""

    def test_unknown_model(self, cli):
        """Test train rejects unknown model kinds before reading data."""
        with pytest.raises(ConfigError):
            cli.train(model='lstm')

    def test_evaluate_needs_models(self, cli):
        """Test evaluate without model files fails."""
        with pytest.raises(ConfigError):
            cli.evaluate()

    def test_unknown_simulation(self, cli):
        """Test simulate rejects unknown kinds."""
        with pytest.raises(ConfigError):
            cli.simulate(kind='orderflow')

    def test_missing_dataset(self, cli, tmp_path):
        """Test training on a missing dataset raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            cli.train(model='gbm', dataset_dir=str(tmp_path / "nothing"))

    def test_unknown_criterion(self, cli):
        """Test repro rejects unknown criterion names."""
        with pytest.raises(ValueError):
            cli.repro(criterion='no-such-check')
