# tme_forecast/cli.py
"""Command-line interface for the volume forecasting pipeline."""

import json
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any

import fire
import numpy as np
import pandas as pd
from loguru import logger
from omegaconf import DictConfig, OmegaConf

from tme_forecast import acceptance
from tme_forecast.baselines import garch, gbm
from tme_forecast.config import horizon_seconds, load_config, section_hash
from tme_forecast.errors import ConfigError, IncompatibleManifest, SourceGridMismatch, TmeForecastError
from tme_forecast.evaluate import (
    ComparisonTable,
    band_frame,
    compare,
    garch_inputs,
    load_model,
    metrics_report,
    prediction_set,
    quartile_report,
    report_rows,
    source_band_frame,
    write_report,
)
from tme_forecast.market_data import (
    ALL_SOURCES,
    Market,
    SourceId,
    SourceKind,
    extract_market_features,
    feature_file_name,
    load_book,
    load_trades,
    read_feature_file,
    write_feature_file,
)
from tme_forecast.preprocess import (
    PreparedDataset,
    SeasonalProfile,
    prepare_dataset,
    read_dataset,
    slots_per_day,
    split_dataset,
    write_dataset,
)
from tme_forecast.seeding import component_seed
from tme_forecast.synthetic import (
    GarchSimSpec,
    gen_garch_series,
    gen_intraday_volume,
    gen_market_files,
    gen_tme_data,
    informative_source_spec,
)
from tme_forecast.tme import (
    TrainConfig,
    collect_ensemble,
    random_search,
    save_ensemble,
    write_forecasts,
)

MODEL_FILE = "model_{kind}.json"
ACF_LAGS = 20


class CLI:
    """TME Forecast - probabilistic trading-volume forecasting from multiple markets."""

    def __init__(
        self,
        config: str | None = None,
        seed: int | None = None,
        horizon: str | None = None,
        out_dir: str | None = None,
        ts_ms: bool | None = None,
        n_jobs: int | None = None,
    ):
        data = {k: v for k, v in {'horizon': horizon, 'ts_ms': ts_ms}.items() if v is not None}
        overrides: dict[str, Any] = {'seed': seed, 'out_dir': out_dir, 'n_jobs': n_jobs}
        if data:
            overrides['data'] = data
        self.cfg: DictConfig = load_config(config, overrides)

    @property
    def out_dir(self) -> Path:
        out = Path(self.cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return out

    # ================================================================
    # Features and datasets
    # ================================================================

    def features(
        self,
        target_trades: str,
        target_book: str,
        external_trades: str,
        external_book: str,
        out: str | None = None,
    ):
        """Aggregate raw trades and book snapshots into per-interval feature files.

        Args:
            target_trades: Trades CSV of the market whose volume is forecast
            target_book: Order book CSV of the target market
            external_trades: Trades CSV of the external market
            external_book: Order book CSV of the external market
            out: Output directory (defaults to --out-dir)
        """
        ts_ms = bool(self.cfg.data.ts_ms)
        trades = {
            Market.TARGET: load_trades(target_trades, ts_ms=ts_ms),
            Market.EXTERNAL: load_trades(external_trades, ts_ms=ts_ms),
        }
        books = {
            Market.TARGET: load_book(target_book, ts_ms=ts_ms),
            Market.EXTERNAL: load_book(external_book, ts_ms=ts_ms),
        }
        interval = horizon_seconds(self.cfg.data.horizon)
        extracted = extract_market_features(
            trades, books, interval, tuple(self.cfg.data.quantile_fracs),
        )

        out_dir = self._dir(out)
        paths = {}
        for source in ALL_SOURCES:
            path = out_dir / feature_file_name(source)
            write_feature_file(source, extracted.grid, extracted.features[source], path)
            paths[source.name] = str(path)
        logger.info(f"Wrote {len(paths)} feature files to {out_dir}")
        return paths

    def dataset(self, features_dir: str | None = None, out: str | None = None):
        """Build the deseasonalized, windowed and split dataset from feature files.

        Args:
            features_dir: Directory holding the four feature files (defaults to --out-dir)
            out: Output directory (defaults to --out-dir)
        """
        source_dir = Path(features_dir) if features_dir else self.out_dir
        features: dict[SourceId, np.ndarray] = {}
        grid = None
        for source in ALL_SOURCES:
            read_source, source_grid, matrix = read_feature_file(source_dir / feature_file_name(source))
            if read_source != source:
                raise SourceGridMismatch(f"{feature_file_name(source)} holds {read_source.name}")
            if grid is None:
                grid = source_grid
            elif not np.array_equal(grid, source_grid):
                raise SourceGridMismatch(f"{source.name} features are on a different grid")
            features[source] = matrix

        # Target volume is buy plus sell volume of the target market's trades
        volumes = features[SourceId(Market.TARGET, SourceKind.TRANSACTIONS)][:, :2].sum(axis=1)
        prepared = prepare_dataset(
            grid,
            features,
            volumes,
            h=int(self.cfg.data.window_h),
            interval=horizon_seconds(self.cfg.data.horizon),
            fractions=tuple(self.cfg.data.split),
        )
        manifest = write_dataset(
            prepared,
            self._dir(out),
            self.cfg.data.horizon,
            horizon_seconds(self.cfg.data.horizon),
            section_hash(self.cfg, 'data'),
        )
        return {
            'instances': {k: v['n'] for k, v in manifest['split'].items() if isinstance(v, dict)},
            'dropped_fraction': manifest['dropped_fraction'],
            'config_hash': manifest['config_hash'],
        }

    # ================================================================
    # Training and prediction
    # ================================================================

    def train(
        self,
        model: str = "tme",
        dataset_dir: str | None = None,
        exog: str | bool | None = None,
        n_draws: int | None = None,
    ):
        """Fit one model on the training split and write ``model_<kind>.json``.

        Args:
            model: One of tme, garch, gbm
            dataset_dir: Dataset directory (defaults to --out-dir)
            exog: GARCH only, on/off for lag-1 exogenous features
            n_draws: Random-search draws (TME: 0 keeps the configured settings)
        """
        if model not in ('tme', 'garch', 'gbm'):
            raise ConfigError(f"model must be one of tme, garch, gbm; got {model!r}")
        split, _, manifest = read_dataset(self._dataset_dir(dataset_dir))
        out_dir = self.out_dir
        sink = logger.add(out_dir / f"train_{model}.log", level="DEBUG", mode="w")
        try:
            logger.info(f"Training {model} with seed {self.cfg.seed}, dataset {manifest['config_hash']}")
            if model == 'tme':
                path = self._train_tme(split, manifest, n_draws)
            elif model == 'garch':
                path = self._train_garch(split, manifest, exog)
            else:
                path = self._train_gbm(split, manifest, n_draws)
        finally:
            logger.remove(sink)
        return str(path)

    def predict(self, model_path: str, dataset_dir: str | None = None, split: str = "test"):
        """Write per-instance forecasts of one split on the raw-volume scale.

        Args:
            model_path: A model file written by ``train``
            dataset_dir: Dataset directory (defaults to --out-dir)
            split: One of train, validation, test
        """
        loaded = load_model(model_path)
        data_split, profile, manifest = read_dataset(self._dataset_dir(dataset_dir))
        self._check_hash(model_path, loaded.dataset_hash, manifest)
        pred, batch = prediction_set(loaded, data_split, split)

        path = self.out_dir / f"forecast_{loaded.kind}_{split}.csv"
        if batch is not None:
            write_forecasts(batch, profile, path)
        else:
            dataset = getattr(data_split, split)
            df = pd.DataFrame({'t': dataset.t.astype(np.int64), 'mean_v': pred.v_hat})
            if pred.sd_hat is not None:
                df['sd_v'] = pred.sd_v
            df.to_csv(path, index=False, float_format='%.17g')
            logger.info(f"Wrote {len(df)} forecasts to {path}")
        return str(path)

    # ================================================================
    # Evaluation
    # ================================================================

    def evaluate(self, *models: str, dataset_dir: str | None = None, quartiles: bool = False):
        """Score model files on the test split and compare them.

        Args:
            models: One or more model files written by ``train``
            dataset_dir: Dataset directory (defaults to --out-dir)
            quartiles: Also report metrics per quartile of the true volume
        """
        if not models:
            raise ConfigError("evaluate needs at least one model file")
        split, _, manifest = read_dataset(self._dataset_dir(dataset_dir))
        out_dir = self.out_dir
        test = split.test

        reports = {}
        rows: list[dict] = []
        for model_path in models:
            loaded = load_model(model_path)
            self._check_hash(model_path, loaded.dataset_hash, manifest)
            name = self._unique_name(Path(model_path).stem, reports)
            pred, batch = prediction_set(loaded, split, 'test')
            report = metrics_report(pred)
            reports[name] = report
            rows.extend(report_rows(name, report, quartile_report(pred) if quartiles else None))
            logger.info(f"{name}: {report}")

            if pred.sd_hat is not None:
                gate = batch.gate_mean if batch is not None else None
                band_frame(test.t, pred, gate).to_csv(
                    out_dir / f"bands_{name}.csv", index=False, float_format='%.17g',
                )
            if batch is not None:
                source_band_frame(
                    test.t, test.a, batch.source_mean, batch.source_var, batch.gate_mean,
                    [s.name for s in test.sources],
                ).to_csv(out_dir / f"source_bands_{name}.csv", index=False, float_format='%.17g')

        write_report(rows, out_dir / "report.csv")
        result: dict[str, Any] = {name: asdict(r) for name, r in reports.items()}
        if len(reports) >= 2:
            table = compare(reports)
            self._write_comparison(table, out_dir)
            result['best'] = table.best
        return result

    # ================================================================
    # Synthetic data and acceptance
    # ================================================================

    def simulate(self, kind: str = "tme", n: int | None = None, days: int = 90, out: str | None = None):
        """Generate synthetic inputs in the same formats the pipeline consumes.

        Args:
            kind: tme (a dataset directory), garch (a log-volume series) or
                volume (four market files plus the raw volume series)
            n: Number of instances (tme, garch)
            days: Number of days (volume)
            out: Output directory (defaults to --out-dir)
        """
        out_dir = self._dir(out)
        seed = component_seed(int(self.cfg.seed), f"simulate_{kind}")
        if kind == 'tme':
            spec = informative_source_spec(h=int(self.cfg.data.window_h), n=n or 20_000, seed=seed)
            sim = gen_tme_data(spec)
            interval = float(spec.interval)
            profile = SeasonalProfile(interval, np.ones(slots_per_day(interval)), fitted_on='synthetic')
            prepared = PreparedDataset(
                split=split_dataset(sim.dataset, tuple(self.cfg.data.split)),
                profile=profile,
                dropped_fraction=0.0,
            )
            manifest = write_dataset(prepared, out_dir, '1m', interval, section_hash(self.cfg, 'data'))
            return {'instances': len(sim.dataset), 'config_hash': manifest['config_hash']}

        if kind == 'garch':
            omega, alpha, beta = acceptance.GARCH_TRUTH
            sim = gen_garch_series(GarchSimSpec(omega, alpha, beta, n=n or 50_000, seed=seed))
            path = out_dir / "garch_series.csv"
            pd.DataFrame({
                'log_y': sim.log_y, 'residual': sim.residuals, 'sigma2': sim.sigma2,
            }).to_csv(path, index=False, float_format='%.17g')
            logger.info(f"Wrote {sim.log_y.size} GARCH observations to {path}")
            return str(path)

        if kind == 'volume':
            volume = gen_intraday_volume(self.cfg.data.horizon, days=days, seed=seed)
            files = gen_market_files(volume.t, volume.v, volume.interval, seed=seed)
            paths = {key: str(p) for key, p in files.write(out_dir).items()}
            pd.DataFrame({'t': volume.t.astype(np.int64), 'v': volume.v}).to_csv(
                out_dir / "volume.csv", index=False, float_format='%.17g',
            )
            paths['volume'] = str(out_dir / "volume.csv")
            return paths

        raise ConfigError(f"kind must be one of tme, garch, volume; got {kind!r}")

    def repro(self, fast: bool = False, criterion: str | None = None):
        """Run the acceptance suite; exits 1 when any criterion fails.

        Args:
            fast: Smaller samples and relaxed tolerances
            criterion: Run only this criterion (comma-separate several)
        """
        only = [c.strip() for c in criterion.split(',')] if criterion else None
        results = acceptance.run_suite(fast=fast, seed=int(self.cfg.seed), only=only)
        for result in results:
            print(result.line())
        acceptance.require_all(results)
        return f"{len(results)} criteria passed"

    # ================================================================
    # Helpers
    # ================================================================

    def _dir(self, path: str | None) -> Path:
        if path is None:
            return self.out_dir
        p = Path(path)
        p.mkdir(parents=True, exist_ok=True)
        return p

    def _dataset_dir(self, path: str | None) -> Path:
        return Path(path) if path else Path(self.cfg.out_dir)

    def _model_path(self, kind: str) -> Path:
        return self.out_dir / MODEL_FILE.format(kind=kind)

    def _check_hash(self, model_path: str, model_hash: str, manifest: dict) -> None:
        if model_hash != manifest['config_hash']:
            raise IncompatibleManifest(
                f"{model_path} was trained on dataset {model_hash[:12] or '?'}, "
                f"not {manifest['config_hash'][:12]}"
            )

    @staticmethod
    def _unique_name(stem: str, taken: dict) -> str:
        name, k = stem, 2
        while name in taken:
            name, k = f"{stem}_{k}", k + 1
        return name

    @staticmethod
    def _write_comparison(table: ComparisonTable, out_dir: Path) -> None:
        (out_dir / "comparison.md").write_text(table.to_markdown())
        table.frame.to_csv(out_dir / "comparison.csv", na_rep='NA', float_format='%.17g')
        logger.info(f"Wrote comparison of {len(table.frame)} models to {out_dir}")

    def _train_tme(self, split, manifest: dict, n_draws: int | None) -> Path:
        settings = OmegaConf.to_container(self.cfg.tme, resolve=True)
        configured_draws = settings.pop('n_draws', 0)
        draws = int(n_draws if n_draws is not None else configured_draws)
        config = TrainConfig(
            **settings,
            seed=component_seed(int(self.cfg.seed), 'tme'),
            n_jobs=int(self.cfg.n_jobs),
        )
        problems = config.check_ranges()
        if problems:
            raise ConfigError(f"TME settings out of range: {'; '.join(problems)}")

        if draws > 0:
            config, table = random_search(split, config, draws, component_seed(int(self.cfg.seed), 'tme_search'))
            logger.info(f"TME random search:\n{table.to_string(index=False)}")
        ensemble = collect_ensemble(config, split)
        path = self._model_path('tme')
        save_ensemble(ensemble, path, manifest, section_hash(self.cfg, 'seed', 'tme'))
        logger.info(f"TME config hash {section_hash(self.cfg, 'seed', 'tme')}")
        return path

    def _train_garch(self, split, manifest: dict, exog: str | bool | None) -> Path:
        use_exog = self._on_off(exog, bool(self.cfg.garch.exog))
        log_y, exog_all, offsets = garch_inputs(split)
        n_train = offsets['validation']
        train_y = log_y[:n_train]
        train_exog = exog_all[:n_train] if use_exog else None
        p_lo, p_hi = self.cfg.garch.p_range
        q_lo, q_hi = self.cfg.garch.q_range

        spec, table = garch.select_order(
            train_y, train_exog, range(p_lo, p_hi + 1), range(q_lo, q_hi + 1), int(self.cfg.n_jobs),
        )
        logger.info(f"ARMA order selection:\n{table.to_string(index=False)}")
        fitted = garch.fit(train_y, train_exog, spec)
        acf = garch.residual_acf(fitted.std_residuals, ACF_LAGS)

        out_dir = self.out_dir
        acf.to_frame().to_csv(out_dir / "acf_garch.csv", index=False, float_format='%.17g')
        pd.DataFrame({
            't': split.train.t.astype(np.int64),
            'residual': fitted.residuals,
            'std_residual': fitted.std_residuals,
        }).to_csv(out_dir / "residuals_garch.csv", index=False, float_format='%.17g')

        report = garch.fit_report(fitted)
        report['selection'] = table.to_dict(orient='records')
        report['acf'] = {'lag': acf.lags.tolist(), 'acf': acf.acf.tolist(), 'band': acf.band}
        report['dataset_hash'] = manifest['config_hash']
        report['config_hash'] = section_hash(self.cfg, 'seed', 'garch')
        path = self._model_path('garch')
        path.write_text(json.dumps(report, indent=2, sort_keys=True))
        logger.info(f"Saved ARMA({spec.p},{spec.q}){'X' if use_exog else ''}-GARCH(1,1) to {path}")
        return path

    def _train_gbm(self, split, manifest: dict, n_draws: int | None) -> Path:
        draws = int(n_draws if n_draws is not None else self.cfg.gbm.n_draws)
        if draws < 1:
            raise ConfigError(f"GBM random search needs n_draws >= 1, got {draws}")
        ranges = {}
        for name in gbm.SEARCH_RANGES:
            lo, hi = self.cfg.gbm[name]
            if lo > hi:
                raise ConfigError(f"gbm.{name} range is empty: {[lo, hi]}")
            ranges[name] = (lo, hi)

        train = gbm.FlatInstances.from_dataset(split.train)
        validation = gbm.FlatInstances.from_dataset(split.validation)
        seed = component_seed(int(self.cfg.seed), 'gbm')
        hyper, table = gbm.random_search(train, validation, draws, seed, ranges, int(self.cfg.n_jobs))
        logger.info(f"GBM random search ({len(table)} draws):\n{table.to_string(index=False)}")
        for problem in hyper.check_ranges():
            logger.warning(f"GbmHyperParams: {problem}")

        model = gbm.gbm_fit(train, hyper)
        data = gbm.model_to_dict(model)
        data['dataset_hash'] = manifest['config_hash']
        data['config_hash'] = section_hash(self.cfg, 'seed', 'gbm')
        path = self._model_path('gbm')
        path.write_text(json.dumps(data, sort_keys=True))
        logger.info(f"Saved {len(model.trees)}-tree GBM to {path}")
        return path

    @staticmethod
    def _on_off(value: str | bool | None, default: bool) -> bool:
        if value is None:
            return default
        if isinstance(value, bool):
            return value
        if str(value).lower() in ('on', 'true', '1', 'yes'):
            return True
        if str(value).lower() in ('off', 'false', '0', 'no'):
            return False
        raise ConfigError(f"expected on/off, got {value!r}")


def main():
    """Entry point."""
    try:
        fire.Fire(CLI)
    except TmeForecastError as e:
        logger.error(str(e))
        sys.exit(e.exit_code)
    except FileNotFoundError as e:
        logger.error(str(e))
        sys.exit(2)


if __name__ == "__main__":
    main()
