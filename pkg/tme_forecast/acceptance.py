# tme_forecast/acceptance.py
"""Synthetic acceptance suite.

Each criterion generates its own data from a seed, runs the production code
against an oracle and returns a ``CriterionResult``. ``fast`` shrinks sample
sizes and relaxes tolerances; results carry that flag.
"""

import math
import tempfile
import time
from collections.abc import Callable
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from loguru import logger

from tme_forecast.baselines import garch, gbm
from tme_forecast.errors import AcceptanceFailure
from tme_forecast.evaluate import (
    PredictionSet,
    band_coverage,
    iw,
    mae,
    nnll,
    rel_metrics,
    rmse,
)
from tme_forecast.market_data import (
    Market,
    extract_market_features,
    load_book,
    load_trades,
)
from tme_forecast.preprocess import (
    ModelInstance,
    WindowScaler,
    deseasonalize,
    prepare_dataset,
    reseasonalize_mean_var,
    split_dataset,
)
from tme_forecast.seeding import spawn_seeds
from tme_forecast.synthetic import (
    DESEASONALIZED_LOG_MEAN,
    GarchSimSpec,
    fd_gradient,
    gen_garch_series,
    gen_intraday_volume,
    gen_market_files,
    gen_tme_data,
    gradient_rel_error,
    informative_source_spec,
    mc_mixture_moments,
)
from tme_forecast.tme import (
    Ensemble,
    MemberProvenance,
    TrainConfig,
    collect_ensemble,
    lognormal_moments,
    loss_gradient,
    nll_dataset,
    nll_loss,
    predict,
    predict_dataset,
    random_params,
)

# ω, α, β of the 1-minute GARCH(1,1) fit on the target market
GARCH_TRUTH = (0.0177, 0.0259, 0.9677)
ARMA_TRUTH = {'phi': (0.8, 0.13, -0.14), 'theta': (0.6, 0.3)}
ARMA_GARCH = (0.0062, 0.0152, 0.9762)


@dataclass
class CriterionResult:
    name: str
    passed: bool
    fast: bool
    seconds: float = 0.0
    details: dict[str, Any] = field(default_factory=dict)

    def line(self) -> str:
        status = 'PASS' if self.passed else 'FAIL'
        label = ' (fast)' if self.fast else ''
        return f"{status} {self.name}{label} [{self.seconds:.1f}s] {self.details}"


Criterion = Callable[[bool, int], CriterionResult]
CRITERIA: dict[str, Criterion] = {}


def criterion(name: str) -> Callable[[Criterion], Criterion]:
    def register(func: Criterion) -> Criterion:
        CRITERIA[name] = func
        return func
    return register


def _rel_close(value: float, reference: float, tol: float) -> bool:
    return abs(value - reference) <= tol * max(abs(reference), 1e-300)


# ============================================================
# Model math
# ============================================================

@criterion("gradient-correctness")
def check_gradient(fast: bool, seed: int) -> CriterionResult:
    """Analytic loss gradient against central differences on random parameters and batches."""
    n_cases, h, batch = (10, 4, 8) if fast else (50, 10, 8)
    worst = 0.0
    for case_seed in spawn_seeds(seed, n_cases):
        rng = np.random.default_rng(case_seed)
        dims = tuple(int(d) for d in rng.choice([6, 13], size=4))
        params = random_params(dims, h, rng, scale=0.3)
        instances = [
            ModelInstance(
                t=float(k), v=1.0, a=1.0, y=float(rng.lognormal(0.0, 1.0)),
                windows=tuple(rng.standard_normal((d, h)) for d in dims),
            )
            for k in range(batch)
        ]
        analytic = loss_gradient(params, instances, l2_lambda=0.1).flatten()
        numeric = fd_gradient(
            lambda vec: nll_loss(params.with_vector(vec), instances, l2_lambda=0.1),
            params.flatten(),
        )
        worst = max(worst, gradient_rel_error(analytic, numeric))
    return CriterionResult(
        "gradient-correctness", worst < 1e-5, fast, details={'cases': n_cases, 'max_rel_dev': worst},
    )


@criterion("lognormal-moments")
def check_lognormal_moments(fast: bool, seed: int) -> CriterionResult:
    """Closed-form log-normal moments against Monte-Carlo; variance only for σ² ≤ 1."""
    n_draws = 1_000_000 if fast else 10_000_000
    rng = np.random.default_rng(seed)
    failures = []
    for k in range(10):
        mu = float(rng.uniform(-1.0, 1.0))
        sigma2 = float(rng.uniform(0.01, 4.0))
        mean, var = lognormal_moments(mu, sigma2)
        draws = np.exp(mu + np.sqrt(sigma2) * rng.standard_normal(n_draws))
        sample_mean = float(draws.mean())
        mean_se = float(draws.std() / np.sqrt(n_draws))
        if abs(sample_mean - mean) > 3.0 * mean_se:
            failures.append(f"mean case {k}")
        if sigma2 <= 1.0:
            centered = draws - sample_mean
            sample_var = float(np.mean(centered ** 2))
            var_se = float(np.sqrt((np.mean(centered ** 4) - sample_var ** 2) / n_draws))
            if abs(sample_var - var) > 3.0 * var_se:
                failures.append(f"variance case {k}")
    return CriterionResult(
        "lognormal-moments", not failures, fast, details={'draws': n_draws, 'failures': failures},
    )


def _random_ensemble(rng: np.random.Generator, dims: tuple[int, ...], h: int) -> Ensemble:
    M = int(rng.integers(1, 6))
    members = tuple(random_params(dims, h, rng, scale=0.1) for _ in range(M))
    return Ensemble(
        members=members,
        provenance=tuple(MemberProvenance(trajectory=m, epoch=1, seed=0) for m in range(M)),
        scaler=WindowScaler.identity(dims),
    )


@criterion("mixture-moments")
def check_mixture_moments(fast: bool, seed: int) -> CriterionResult:
    """Ensemble predictive mean and variance against sampling from the ensemble mixture."""
    n_draws = 100_000 if fast else 1_000_000
    dims, h = (6, 13, 6, 13), 10
    rng = np.random.default_rng(seed)
    failures = []
    worst_split = 0.0
    for k in range(10):
        ensemble = _random_ensemble(rng, dims, h)
        instance = ModelInstance(
            t=0.0, v=1.0, a=1.0, y=1.0,
            windows=tuple(rng.standard_normal((d, h)) for d in dims),
        )
        forecast = predict(ensemble, instance)
        mc = mc_mixture_moments(ensemble, instance, n_draws, seed=int(rng.integers(2**31)))
        if abs(forecast.mean - mc.mean) > 3.0 * mc.mean_se:
            failures.append(f"mean case {k}")
        if abs(forecast.var_total - mc.var) > 3.0 * mc.var_se:
            failures.append(f"variance case {k}")
        split = abs(forecast.var_aleatoric + forecast.var_epistemic - forecast.var_total)
        worst_split = max(worst_split, split / forecast.var_total)
    passed = not failures and worst_split <= 1e-10
    return CriterionResult(
        "mixture-moments", passed, fast,
        details={'draws': n_draws, 'failures': failures, 'max_split_error': worst_split},
    )


# ============================================================
# TME on synthetic mixtures
# ============================================================

def _synthetic_tme_run(fast: bool, seed: int):
    """Generate informative-source data, train an ensemble and predict the test block."""
    n = 4_000 if fast else 20_000
    sim = gen_tme_data(informative_source_spec(n=n, seed=seed))
    split = split_dataset(sim.dataset)
    config = TrainConfig(
        learning_rate=0.001,
        batch_size=64,
        l2_lambda=0.1,
        n_trajectories=1 if fast else 2,
        iterates_per_trajectory=2,
        burn_in_epochs=2 if fast else 3,
        max_epochs=8 if fast else 15,
        seed=seed,
    )
    ensemble = collect_ensemble(config, split)
    test_start = len(split.train) + len(split.validation)
    return sim, split, ensemble, predict_dataset(ensemble, split.test), test_start


@criterion("source-recovery")
def check_source_recovery(fast: bool, seed: int) -> CriterionResult:
    """Gate mass on the informative source and test RMSE against the true model."""
    seeds = spawn_seeds(seed, 2 if fast else 5)
    required = 1 if fast else 4
    rows = []
    for s in seeds:
        sim, split, _, batch, start = _synthetic_tme_run(fast, s)
        gate_1 = float(batch.gate_mean[:, 0].mean())
        model_rmse = float(np.sqrt(np.mean((batch.mean - split.test.y) ** 2)))
        oracle_rmse = float(np.sqrt(np.mean((sim.oracle_mean()[start:] - split.test.y) ** 2)))
        rows.append({'seed': s, 'gate_1': gate_1, 'rmse_ratio': model_rmse / oracle_rmse})
    recovered = sum(r['gate_1'] > 0.6 for r in rows)
    accurate = all(r['rmse_ratio'] <= 1.2 for r in rows)
    return CriterionResult(
        "source-recovery", recovered >= required and accurate, fast, details={'runs': rows},
    )


@criterion("calibration")
def check_calibration(fast: bool, seed: int) -> CriterionResult:
    """Held-out NNLL close to the generative NNLL and ±2 sd band coverage."""
    sim, split, ensemble, batch, start = _synthetic_tme_run(fast, seed)
    model_nll = float(np.mean(nll_dataset(ensemble, split.test)))
    true_nll = float(np.mean(sim.oracle_nll()[start:]))
    pred = PredictionSet(
        v_true=split.test.y, v_hat=batch.mean, a=np.ones(len(split.test)), sd_hat=batch.sd,
    )
    coverage = band_coverage(pred, k=2.0)
    tol = 0.10 if fast else 0.05
    passed = abs(model_nll - true_nll) <= tol * abs(true_nll) and coverage >= 0.90
    return CriterionResult(
        "calibration", passed, fast,
        details={'model_nnll': model_nll, 'true_nnll': true_nll, 'coverage': coverage},
    )


# ============================================================
# Baselines
# ============================================================

@criterion("garch-recovery")
def check_garch_recovery(fast: bool, seed: int) -> CriterionResult:
    """GARCH(1,1) MLE recovers simulated parameters within estimated standard errors."""
    omega, alpha, beta = GARCH_TRUTH
    n = 10_000 if fast else 50_000
    seeds = spawn_seeds(seed, 2 if fast else 5)
    rel_tol, required = (0.6, 1) if fast else (0.3, 4)
    rows = []
    for s in seeds:
        sim = gen_garch_series(GarchSimSpec(omega=omega, alpha=alpha, beta=beta, n=n, seed=s))
        fitted, _, _ = garch.fit_garch(sim.residuals)
        se_omega, se_alpha, _ = fitted.std_errors
        ok = (
            abs(fitted.alpha - alpha) <= rel_tol * alpha
            and abs(fitted.alpha - alpha) <= 4.0 * se_alpha
            and abs(fitted.omega - omega) <= 4.0 * se_omega
        )
        rows.append({
            'seed': s, 'omega': fitted.omega, 'alpha': fitted.alpha, 'beta': fitted.beta,
            'persistence': fitted.persistence, 'ok': bool(ok),
        })
    stationary = all(r['persistence'] < 1.0 for r in rows)
    passed = sum(r['ok'] for r in rows) >= required and stationary
    return CriterionResult("garch-recovery", passed, fast, details={'runs': rows})


@criterion("order-selection")
def check_order_selection(fast: bool, seed: int) -> CriterionResult:
    """AIC picks an order within one of ARMA(3,2) on simulated ARMA(3,2)-GARCH(1,1).

    The full run searches every allowed order; the fast run only the orders
    up to one past the truth.
    """
    omega, alpha, beta = ARMA_GARCH
    n = 5_000 if fast else 20_000
    seeds = spawn_seeds(seed, 2 if fast else 10)
    orders = range(1, 5) if fast else range(1, garch.MAX_ORDER + 1)
    required = 1 if fast else 8
    picked = []
    for s in seeds:
        sim = gen_garch_series(GarchSimSpec(
            omega=omega, alpha=alpha, beta=beta, n=n, seed=s, mean=-1.36,
            phi=ARMA_TRUTH['phi'], theta=ARMA_TRUTH['theta'],
        ))
        spec, _ = garch.select_order(sim.log_y, None, orders, orders, n_jobs=1 if fast else -1)
        picked.append((spec.p, spec.q))
    hits = sum(abs(p - 3) <= 1 and abs(q - 2) <= 1 for p, q in picked)
    return CriterionResult(
        "order-selection", hits >= required, fast, details={'selected': picked, 'hits': hits},
    )


def _brute_force_split(x: np.ndarray, r: np.ndarray) -> tuple[int, float]:
    """Best single split by enumerating every feature and every midpoint."""
    best_sse, best = math.inf, (-1, math.nan)
    for j in range(x.shape[1]):
        values = sorted(set(x[:, j].tolist()))
        for lo, hi in zip(values[:-1], values[1:]):
            threshold = 0.5 * (lo + hi)
            sse = 0.0
            for side in (x[:, j] <= threshold, x[:, j] > threshold):
                part = r[side]
                sse += float(np.sum((part - part.mean()) ** 2))
            if sse < best_sse - 1e-12 * max(1.0, best_sse):
                best_sse, best = sse, (j, threshold)
    return best


@criterion("gbm-monotone")
def check_gbm(fast: bool, seed: int) -> CriterionResult:
    """Stagewise training error never increases; root split matches brute force."""
    rng = np.random.default_rng(seed)
    n_trees = 20 if fast else 100
    targets = [
        lambda x: np.sin(2.0 * x[:, 0]) + 0.5 * x[:, 1] ** 2,
        lambda x: x[:, 0] * x[:, 1] - x[:, 2],
        lambda x: np.where(x[:, 2] > 0.3, 1.0, -1.0) + 0.2 * x[:, 0],
    ]
    monotone = []
    for k, target in enumerate(targets):
        x = rng.uniform(-2.0, 2.0, (500, 3))
        u = target(x) + 0.1 * rng.standard_normal(500)
        model = gbm.gbm_fit(
            gbm.FlatInstances(x=x, u=u),
            gbm.GbmHyperParams(n_trees=n_trees, max_depth=3, learning_rate=0.1, seed=seed + k),
        )
        mse = np.asarray(model.stage_mse)
        monotone.append(bool(np.all(np.diff(mse) <= 1e-12 * mse[:-1])))

    mismatches = 0
    for n in (20, 50, 120, 200):
        x = rng.standard_normal((n, 4))
        r = x[:, int(rng.integers(4))] + 0.3 * rng.standard_normal(n)
        root = gbm.fit_tree(
            x, r, gbm.GbmHyperParams(n_trees=1, max_depth=1, min_samples_leaf=1, max_features_frac=1.0),
        )
        expected = _brute_force_split(x, r)
        if not (
            isinstance(root, gbm.Split)
            and root.feature_index == expected[0]
            and root.threshold == expected[1]
        ):
            mismatches += 1
    return CriterionResult(
        "gbm-monotone", all(monotone) and mismatches == 0, fast,
        details={'monotone': monotone, 'split_mismatches': mismatches},
    )


# ============================================================
# Pipeline and metrics
# ============================================================

@criterion("pipeline-roundtrip")
def check_pipeline(fast: bool, seed: int) -> CriterionResult:
    """Synthetic market files through features, dataset and deseasonalization."""
    days = 20 if fast else 90
    volume = gen_intraday_volume('1m', days=days, seed=seed)
    with tempfile.TemporaryDirectory() as tmp:
        paths = gen_market_files(volume.t, volume.v, volume.interval, seed=seed).write(tmp)
        trades = {m: load_trades(paths[f"{m.value}_trades"]) for m in Market}
        books = {m: load_book(paths[f"{m.value}_book"]) for m in Market}
    market = extract_market_features(trades, books, volume.interval)
    prepared = prepare_dataset(
        market.grid, market.features, market.volumes, h=10, interval=volume.interval,
    )
    profile_corr = float(np.corrcoef(prepared.profile.values, volume.profile)[0, 1])

    train = prepared.split.train
    log_mean = float(np.mean(np.log(deseasonalize(train.v, train.t, prepared.profile))))

    test = prepared.split.test
    back, _ = reseasonalize_mean_var(test.y, np.zeros(len(test)), test.t, prepared.profile)
    roundtrip = float(np.max(np.abs(back - test.v) / test.v))

    passed = profile_corr > 0.95 and abs(log_mean - DESEASONALIZED_LOG_MEAN) <= 0.1 and roundtrip <= 1e-12
    return CriterionResult(
        "pipeline-roundtrip", passed, fast,
        details={
            'profile_corr': profile_corr,
            'deseasonalized_log_mean': log_mean,
            'dropped_fraction': prepared.dropped_fraction,
            'roundtrip_error': roundtrip,
        },
    )


def _loop_metrics(v, v_hat, a, sd, nll) -> dict[str, float]:
    n = len(v)
    sq = ab = rel_sq = rel_ab = nl = width = 0.0
    for i in range(n):
        err = v[i] - v_hat[i]
        sq += err * err
        ab += abs(err)
        rel_sq += (err / v[i]) ** 2
        rel_ab += abs(err / v[i])
        nl += nll[i] + math.log(a[i])
        width += sd[i] * a[i]
    return {
        'rmse': math.sqrt(sq / n), 'mae': ab / n,
        'rel_rmse': math.sqrt(rel_sq / n), 'mape': rel_ab / n,
        'nnll': nl / n, 'iw': width / n,
    }


@criterion("metric-oracles")
def check_metrics(fast: bool, seed: int) -> CriterionResult:
    """Vectorized metrics against plain loops; NNLL shifts by ln c when a scales by c."""
    rng = np.random.default_rng(seed)
    worst, worst_shift = 0.0, 0.0
    for _ in range(20):
        n = int(rng.integers(5, 200))
        pred = PredictionSet(
            v_true=rng.lognormal(0.0, 1.0, n),
            v_hat=rng.lognormal(0.0, 1.0, n),
            a=rng.uniform(0.5, 2.0, n),
            sd_hat=rng.uniform(0.1, 1.0, n),
            nll=rng.normal(1.0, 0.5, n),
        )
        expected = _loop_metrics(*(x.tolist() for x in (pred.v_true, pred.v_hat, pred.a, pred.sd_hat, pred.nll)))
        rel_rmse, mape = rel_metrics(pred)
        got = {
            'rmse': rmse(pred), 'mae': mae(pred), 'rel_rmse': rel_rmse, 'mape': mape,
            'nnll': nnll(pred), 'iw': iw(pred),
        }
        for key, value in got.items():
            worst = max(worst, abs(value - expected[key]) / max(abs(expected[key]), 1e-300))

        c = float(rng.uniform(0.5, 3.0))
        scaled = PredictionSet(pred.v_true, pred.v_hat, pred.a * c, pred.sd_hat, pred.nll)
        worst_shift = max(worst_shift, abs(nnll(scaled) - nnll(pred) - math.log(c)))
    passed = worst <= 1e-12 and worst_shift <= 1e-12
    return CriterionResult(
        "metric-oracles", passed, fast, details={'max_rel_error': worst, 'max_shift_error': worst_shift},
    )


# ============================================================
# Runner
# ============================================================

def run_suite(
    fast: bool = False,
    seed: int = 0,
    only: list[str] | None = None,
) -> list[CriterionResult]:
    """Run the selected criteria (all by default) in registry order."""
    names = list(CRITERIA) if not only else only
    unknown = [name for name in names if name not in CRITERIA]
    if unknown:
        raise ValueError(f"Unknown criteria: {unknown}; known: {list(CRITERIA)}")

    results = []
    for name in names:
        logger.info(f"Running {name}{' (fast)' if fast else ''}")
        started = time.perf_counter()
        result = CRITERIA[name](fast, seed)
        result.seconds = time.perf_counter() - started
        logger.info(result.line())
        results.append(result)
    return results


def require_all(results: list[CriterionResult]) -> None:
    failed = [r.name for r in results if not r.passed]
    if failed:
        raise AcceptanceFailure(failed)
