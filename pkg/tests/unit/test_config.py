# tests/unit/test_config.py
"""Unit tests for configuration layering, hashing, seeding and exit codes."""

import pytest
from omegaconf import OmegaConf

from tme_forecast import errors
from tme_forecast.config import (
    HORIZONS,
    config_hash,
    get_env_overrides,
    horizon_seconds,
    load_config,
    section_hash,
)
from tme_forecast.seeding import component_seed, spawn_seeds


@pytest.fixture(autouse=True)
def clean_env(monkeypatch):
    for name in ("TME_FORECAST_SEED", "TME_FORECAST_OUT_DIR", "TME_FORECAST_N_JOBS"):
        monkeypatch.delenv(name, raising=False)


class TestLoadConfig:
    """Tests for layered configuration."""

    def test_defaults(self):
        """Test defaults resolve without a file."""
        cfg = load_config()
        assert cfg.data.horizon == '1m'
        assert cfg.data.window_h == 10
        assert list(cfg.data.split) == [0.7, 0.1, 0.2]
        assert cfg.tme.n_trajectories * cfg.tme.iterates_per_trajectory == 20

    def test_yaml_file(self, tmp_path):
        """Test a YAML file overrides only the keys it names."""
        path = tmp_path / "run.yaml"
        path.write_text("seed: 7\ntme:\n  batch_size: 32\n")
        cfg = load_config(path)
        assert cfg.seed == 7
        assert cfg.tme.batch_size == 32
        assert cfg.tme.learning_rate == 0.001

    def test_json_file(self, tmp_path):
        """Test JSON config files are accepted."""
        path = tmp_path / "run.json"
        path.write_text('{"data": {"horizon": "5m"}}')
        assert load_config(path).data.horizon == '5m'

    def test_layer_order(self, tmp_path, monkeypatch):
        """Test flags beat the environment, which beats the file."""
        path = tmp_path / "run.yaml"
        path.write_text("seed: 1\nout_dir: from_file\n")
        monkeypatch.setenv("TME_FORECAST_SEED", "2")
        monkeypatch.setenv("TME_FORECAST_OUT_DIR", "from_env")
        cfg = load_config(path, {'seed': 3, 'out_dir': None})
        assert cfg.seed == 3
        assert cfg.out_dir == 'from_env'

    def test_env_overrides(self, monkeypatch):
        """Test environment variables are typed."""
        monkeypatch.setenv("TME_FORECAST_N_JOBS", "4")
        assert get_env_overrides() == {'n_jobs': 4}

    def test_missing_file(self, tmp_path):
        """Test a missing config file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_config(tmp_path / "none.yaml")

    def test_unreadable_file(self, tmp_path):
        """Test a malformed file raises ConfigError."""
        path = tmp_path / "bad.json"
        path.write_text("{not json")
        with pytest.raises(errors.ConfigError):
            load_config(path)

    @pytest.mark.parametrize("override", [
        {'data': {'horizon': '2m'}},
        {'data': {'window_h': 0}},
        {'garch': {'p_range': [0, 3]}},
        {'garch': {'q_range': [4, 11]}},
        {'n_jobs': 0},
    ])
    def test_invalid(self, override):
        """Test out-of-domain values are rejected."""
        with pytest.raises(errors.ConfigError):
            load_config(overrides=override)


class TestHashing:
    """Tests for configuration hashes."""

    def test_key_order(self):
        """Test hashes ignore key order."""
        assert config_hash({'a': 1, 'b': [1, 2]}) == config_hash({'b': [1, 2], 'a': 1})
        assert config_hash({'a': 1}) != config_hash({'a': 2})

    def test_dictconfig(self):
        """Test DictConfig and plain dicts hash alike."""
        assert config_hash(OmegaConf.create({'x': 1.5})) == config_hash({'x': 1.5})

    def test_section_hash(self):
        """Test a section hash ignores other sections."""
        a = load_config(overrides={'out_dir': 'a', 'tme': {'batch_size': 16}})
        b = load_config(overrides={'out_dir': 'b', 'tme': {'batch_size': 16}})
        assert section_hash(a, 'seed', 'tme') == section_hash(b, 'seed', 'tme')
        assert config_hash(a) != config_hash(b)

    def test_horizons(self):
        """Test horizon names map to seconds."""
        assert [horizon_seconds(h) for h in ('1m', '5m', '10m')] == [60, 300, 600]
        assert set(HORIZONS) == {'1m', '5m', '10m'}
        with pytest.raises(errors.ConfigError):
            horizon_seconds('1h')


class TestSeeding:
    """Tests for deterministic seed derivation."""

    def test_spawn(self):
        """Test spawned seeds are reproducible and distinct."""
        seeds = spawn_seeds(0, 5)
        assert seeds == spawn_seeds(0, 5)
        assert len(set(seeds)) == 5
        assert spawn_seeds(1, 5) != seeds

    def test_prefix_stable(self):
        """Test asking for more seeds keeps the earlier ones."""
        assert spawn_seeds(3, 6)[:4] == spawn_seeds(3, 4)

    def test_component(self):
        """Test named components get stable, different seeds."""
        assert component_seed(0, 'tme') == component_seed(0, 'tme')
        assert component_seed(0, 'tme') != component_seed(0, 'gbm')
        assert component_seed(0, 'tme') != component_seed(1, 'tme')


class TestErrors:
    """Tests for the exception hierarchy."""

    @pytest.mark.parametrize("exc, code", [
        (errors.MalformedRow(3), 2),
        (errors.ShapeMismatch("x"), 2),
        (errors.DivergedLoss("x"), 3),
        (errors.OptimizerFailed("x"), 3),
        (errors.ZeroTrueVolume("x"), 4),
        (errors.IncompatibleManifest("x"), 4),
        (errors.AcceptanceFailure(["A1"]), 1),
    ])
    def test_exit_codes(self, exc, code):
        """Test each family maps to its exit code."""
        assert isinstance(exc, errors.TmeForecastError)
        assert exc.exit_code == code

    def test_row_message(self):
        """Test row errors name the error and the row."""
        exc = errors.NonMonotoneTimestamp(2, "5 after 10")
        assert exc.line == 2
        assert str(exc) == "NonMonotoneTimestamp at row 2: 5 after 10"

    def test_acceptance_lists_failures(self):
        """Test the acceptance failure keeps the failed names."""
        exc = errors.AcceptanceFailure(["A1", "A3"])
        assert exc.failed == ["A1", "A3"]
        assert "A1, A3" in str(exc)
