# tests/integration/test_pipeline.py
"""End-to-end tests: synthetic market files through features, datasets, models and reports."""

import sys
from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from tme_forecast.cli import main
from tme_forecast.errors import IncompatibleManifest
from tme_forecast.market_data import ALL_SOURCES
from tme_forecast.preprocess import read_dataset
from tme_forecast.preprocess.dataset_io import read_manifest


class TestFeaturesAndDataset:
    """Tests for the features and dataset commands."""

    def test_feature_files(self, pipeline):
        """Test one feature file is written per source."""
        assert set(pipeline['features']) == {s.name for s in ALL_SOURCES}
        for path in pipeline['features'].values():
            assert Path(path).exists()

    def test_manifest(self, pipeline):
        """Test the manifest records window length, horizon and split sizes."""
        manifest = read_manifest(pipeline['dataset_dir'])
        assert manifest['h'] == 3
        assert manifest['horizon'] == '10m'
        assert manifest['sources'] == [s.name for s in ALL_SOURCES]
        assert manifest['d_s'] == [s.dim for s in ALL_SOURCES]
        assert manifest['config_hash'] == pipeline['summary']['config_hash']
        assert 0.0 <= manifest['dropped_fraction'] < 0.1

    def test_split_order(self, pipeline):
        """Test the parts are contiguous and in time order."""
        split, profile, _ = read_dataset(pipeline['dataset_dir'])
        assert split.train.t[-1] < split.validation.t[0] < split.test.t[0]
        assert np.all(split.test.y > 0)
        assert profile.values.size == 144
        np.testing.assert_allclose(split.test.v, split.test.a * split.test.y, rtol=1e-12)

    def test_volume_matches_market(self, pipeline):
        """Test dataset volumes are the simulated interval volumes."""
        split, _, _ = read_dataset(pipeline['dataset_dir'])
        volume = pd.read_csv(pipeline['market']['volume']).set_index('t')['v']
        t = split.train.t.astype(np.int64)
        np.testing.assert_allclose(split.train.v, volume.loc[t].to_numpy(), rtol=1e-9)


class TestTrainPredictEvaluate:
    """Tests for model training, forecasts and comparison reports."""

    def test_model_files(self, trained):
        """Test each model kind writes its own file."""
        assert {p.name for p in trained.values()} == {'model_tme.json', 'model_garch.json', 'model_gbm.json'}
        out_dir = trained['tme'].parent
        assert (out_dir / "acf_garch.csv").exists()
        assert (out_dir / "residuals_garch.csv").exists()
        assert (out_dir / "train_tme.log").exists()

    def test_tme_deterministic(self, pipeline, trained, make_cli, tmp_path):
        """Test retraining with the same seed writes a byte-identical model file."""
        again = make_cli(tmp_path).train(model='tme', dataset_dir=str(pipeline['dataset_dir']))
        assert Path(again).read_bytes() == trained['tme'].read_bytes()

    def test_predict(self, pipeline, trained):
        """Test forecasts carry raw-scale means and sds."""
        path = pipeline['cli'].predict(str(trained['tme']), dataset_dir=str(pipeline['dataset_dir']))
        df = pd.read_csv(path)
        split, _, _ = read_dataset(pipeline['dataset_dir'])
        assert len(df) == len(split.test)
        assert {'mean_v', 'sd_v', 'gate_1', 'gate_4'} <= set(df.columns)
        assert np.all(df['sd_v'] > 0)

    def test_predict_point_model(self, pipeline, trained):
        """Test point-only models write means without sds."""
        path = pipeline['cli'].predict(
            str(trained['gbm']), dataset_dir=str(pipeline['dataset_dir']), split='validation',
        )
        assert Path(path).name == "forecast_gbm_validation.csv"
        assert list(pd.read_csv(path).columns) == ['t', 'mean_v']

    def test_evaluate(self, pipeline, trained):
        """Test three models are scored, compared and given band files."""
        cli = pipeline['cli']
        result = cli.evaluate(
            *(str(trained[k]) for k in ('tme', 'garch', 'gbm')),
            dataset_dir=str(pipeline['dataset_dir']),
            quartiles=True,
        )
        assert result['model_gbm']['nnll'] is None
        assert result['model_tme']['nnll'] is not None
        assert set(result['best']) == {'rmse', 'mae', 'nnll', 'iw'}
        assert 'model_gbm' not in result['best']['nnll']

        out_dir = cli.out_dir
        for name in ("report.csv", "comparison.md", "comparison.csv", "bands_model_tme.csv",
                     "bands_model_garch.csv", "source_bands_model_tme.csv"):
            assert (out_dir / name).exists(), name
        report = pd.read_csv(out_dir / "report.csv", keep_default_na=False)
        assert set(report['quartile']) == {'', 'Q1', 'Q2', 'Q3', 'Q4'}
        assert 'NA' in set(report.loc[report['model'] == 'model_gbm', 'value'])

    def test_other_dataset_refused(self, pipeline, trained, make_cli, tmp_path):
        """Test a model cannot be scored on a dataset built with other settings."""
        cli = make_cli(tmp_path)
        cli.cfg.data.window_h = 4
        cli.dataset(features_dir=str(pipeline['root'] / "features"), out=str(tmp_path / "dataset"))
        with pytest.raises(IncompatibleManifest):
            cli.evaluate(str(trained['tme']), dataset_dir=str(tmp_path / "dataset"))


class TestSimulate:
    """Tests for the simulate command."""

    def test_tme_dataset(self, make_cli, tmp_path):
        """Test a simulated TME dataset trains and evaluates."""
        cli = make_cli(tmp_path)
        summary = cli.simulate(kind='tme', n=400)
        assert summary['instances'] == 400
        model = cli.train(model='tme')
        result = cli.evaluate(model)
        assert result['model_tme']['n'] == 80

    def test_garch_series(self, make_cli, tmp_path):
        """Test the GARCH simulation writes the requested length."""
        path = make_cli(tmp_path).simulate(kind='garch', n=500)
        df = pd.read_csv(path)
        assert list(df.columns) == ['log_y', 'residual', 'sigma2']
        assert len(df) == 500


class TestMain:
    """Tests for the entry point's exit codes."""

    def _run(self, monkeypatch, *args):
        monkeypatch.setattr(sys, 'argv', ['tme-forecast', *args])
        with pytest.raises(SystemExit) as info:
            main()
        return info.value.code

    def test_config_error(self, monkeypatch, tmp_path):
        """Test invalid arguments exit with code 2."""
        assert self._run(monkeypatch, 'train', '--model=lstm', f'--out_dir={tmp_path}') == 2

    def test_missing_file(self, monkeypatch, tmp_path):
        """Test missing inputs exit with code 2."""
        assert self._run(monkeypatch, 'evaluate', str(tmp_path / "none.json"), f'--out_dir={tmp_path}') == 2

    def test_incompatible_model(self, monkeypatch, pipeline, trained, tmp_path):
        """Test scoring against a mismatched dataset exits with code 4."""
        other = tmp_path / "sim"
        self._run_ok(monkeypatch, 'simulate', '--kind=tme', '--n=200', f'--out_dir={other}')
        code = self._run(monkeypatch, 'evaluate', str(trained['gbm']), f'--dataset_dir={other}', f'--out_dir={other}')
        assert code == 4

    @staticmethod
    def _run_ok(monkeypatch, *args):
        monkeypatch.setattr(sys, 'argv', ['tme-forecast', *args])
        main()
