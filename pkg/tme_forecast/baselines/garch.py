# tme_forecast/baselines/garch.py
"""ARMA(X) mean equation with GARCH(1,1) residual variance on log-volume.

Estimation is two-stage: conditional sum of squares for the mean equation,
then Gaussian maximum likelihood for the GARCH parameters on its residuals.
Exogenous rows are aligned so that ``exog[t]`` holds the features of t-1.
"""

import itertools
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from scipy.optimize import least_squares, minimize
from scipy.signal import lfilter
from scipy.special import expit, logit
from scipy.stats import norm

from tme_forecast.errors import (
    AllFitsFailed,
    NonStationaryFit,
    OptimizerFailed,
    ShapeMismatch,
    TrainingError,
)

LOG_2PI = float(np.log(2.0 * np.pi))
HESSIAN_STEP = 1e-4
BAD_RESIDUAL = 1e10
MAX_ORDER = 10


@dataclass(frozen=True)
class ArmaxSpec:
    p: int
    q: int
    use_exog: bool = False
    exog_dim: int = 0

    def __post_init__(self):
        if not (1 <= self.p <= MAX_ORDER and 1 <= self.q <= MAX_ORDER):
            raise ValueError(f"p and q must lie in [1, {MAX_ORDER}], got ({self.p}, {self.q})")
        if self.use_exog and self.exog_dim < 1:
            raise ValueError("use_exog requires exog_dim >= 1")

    @property
    def n_params(self) -> int:
        """Mean-equation parameters plus the three GARCH parameters."""
        return 1 + self.p + self.q + (self.exog_dim if self.use_exog else 0) + 3


@dataclass(frozen=True)
class GarchParams:
    omega: float
    alpha: float
    beta: float
    std_errors: tuple[float, float, float] = (float('nan'),) * 3

    @property
    def values(self) -> np.ndarray:
        return np.array([self.omega, self.alpha, self.beta])

    @property
    def z_stats(self) -> np.ndarray:
        return self.values / np.asarray(self.std_errors)

    @property
    def p_values(self) -> np.ndarray:
        """Two-sided normal p-values."""
        return 2.0 * norm.sf(np.abs(self.z_stats))

    @property
    def persistence(self) -> float:
        return self.alpha + self.beta


@dataclass(frozen=True)
class FittedArmaxGarch:
    spec: ArmaxSpec
    mu: float
    phi: np.ndarray
    theta: np.ndarray
    psi: np.ndarray
    garch: GarchParams
    loglik: float
    aic: float
    residuals: np.ndarray = field(repr=False)
    sigma2: np.ndarray = field(repr=False)
    y_mean: float = 0.0
    sigma2_0: float = 1.0
    exog_mean: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)
    exog_scale: np.ndarray = field(default_factory=lambda: np.ones(0), repr=False)

    @property
    def std_residuals(self) -> np.ndarray:
        return self.residuals / np.sqrt(self.sigma2)


@dataclass(frozen=True)
class GarchHistory:
    """Most recent observations, oldest first; the last entry is t-1."""
    log_y: np.ndarray
    residuals: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class AcfResult:
    lags: np.ndarray
    acf: np.ndarray
    band: float
    acf0: float = 1.0

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'lag': self.lags, 'acf': self.acf, 'band': self.band})


# ============================================================
# Mean equation
# ============================================================

def _lag_matrix(y: np.ndarray, p: int, fill: float) -> np.ndarray:
    """Columns y_{t-1} .. y_{t-p}, with pre-sample values set to ``fill``."""
    padded = np.concatenate([np.full(p, fill), y])
    n = y.size
    return np.column_stack([padded[p - i:p - i + n] for i in range(1, p + 1)])


def _css_residuals(
    coef: np.ndarray,
    y: np.ndarray,
    lags: np.ndarray,
    exog: np.ndarray | None,
    p: int,
    q: int,
) -> np.ndarray:
    mu, phi, theta = coef[0], coef[1:1 + p], coef[1 + p:1 + p + q]
    w = y - mu - lags @ phi
    if exog is not None:
        w = w - exog @ coef[1 + p + q:]
    # ε_t = w_t - Σ θ_j ε_{t-j}, pre-sample residuals zero
    return lfilter([1.0], np.concatenate([[1.0], theta]), w)


def _standardize(exog: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = exog.mean(axis=0)
    scale = exog.std(axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    return (exog - mean) / scale, mean, scale


def fit_mean_equation(
    log_y: np.ndarray, exog: np.ndarray | None, p: int, q: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional-sum-of-squares ARMA(X) estimate; returns (coef, residuals)."""
    y = np.asarray(log_y, dtype=float)
    lags = _lag_matrix(y, p, float(y.mean()))

    # OLS start with θ = 0
    design = np.column_stack([np.ones(y.size), lags] + ([exog] if exog is not None else []))
    ols, *_ = np.linalg.lstsq(design, y, rcond=None)
    start = np.concatenate([ols[:1 + p], np.zeros(q), ols[1 + p:]])

    def residuals(coef):
        eps = _css_residuals(coef, y, lags, exog, p, q)
        return np.where(np.isfinite(eps), np.clip(eps, -BAD_RESIDUAL, BAD_RESIDUAL), BAD_RESIDUAL)

    result = least_squares(residuals, start, method='trf', x_scale='jac')
    if not np.all(np.isfinite(result.x)):
        raise OptimizerFailed(f"CSS: {result.message}")
    return result.x, _css_residuals(result.x, y, lags, exog, p, q)


def check_stationary(phi: np.ndarray) -> None:
    """Inverse roots of the AR polynomial must lie inside the unit circle."""
    roots = np.roots(np.concatenate([[1.0], -np.asarray(phi)]))
    if roots.size and np.max(np.abs(roots)) >= 1.0:
        raise NonStationaryFit(f"AR roots reach the unit circle (max |r| = {np.max(np.abs(roots)):.4f})")


# ============================================================
# GARCH(1,1)
# ============================================================

def garch_variance(
    residuals: np.ndarray, omega: float, alpha: float, beta: float, sigma2_0: float,
) -> np.ndarray:
    """σ²_t = ω + α ε²_{t-1} + β σ²_{t-1}, starting at σ²_0."""
    eps = np.asarray(residuals, dtype=float)
    sigma2 = np.empty(eps.size)
    sigma2[0] = sigma2_0
    if eps.size > 1:
        drive = omega + alpha * eps[:-1] ** 2
        sigma2[1:], _ = lfilter([1.0], [1.0, -beta], drive, zi=[beta * sigma2_0])
    return sigma2


def garch_loglik(
    residuals: np.ndarray, omega: float, alpha: float, beta: float, sigma2_0: float,
) -> float:
    sigma2 = garch_variance(residuals, omega, alpha, beta, sigma2_0)
    if np.any(~(sigma2 > 0)):
        return -np.inf
    eps2 = np.asarray(residuals) ** 2
    return float(-0.5 * np.sum(LOG_2PI + np.log(sigma2) + eps2 / sigma2))


def _to_natural(x: np.ndarray) -> tuple[float, float, float]:
    """ω = exp(a), α = πρ, β = π(1 − ρ) with π, ρ logistic."""
    persistence, share = expit(x[1]), expit(x[2])
    return float(np.exp(x[0])), float(persistence * share), float(persistence * (1.0 - share))


def _numerical_hessian(f, x: np.ndarray) -> np.ndarray:
    """Central-difference Hessian with relative steps."""
    k = x.size
    steps = HESSIAN_STEP * np.maximum(np.abs(x), 1e-8)
    hess = np.empty((k, k))
    for i in range(k):
        for j in range(i, k):
            ei = np.zeros(k)
            ej = np.zeros(k)
            ei[i] = steps[i]
            ej[j] = steps[j]
            value = (
                f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)
            ) / (4.0 * steps[i] * steps[j])
            hess[i, j] = hess[j, i] = value
    return hess


def fit_garch(residuals: np.ndarray) -> tuple[GarchParams, float, float]:
    """Gaussian MLE of GARCH(1,1); returns (params, loglik, σ²_0)."""
    eps = np.asarray(residuals, dtype=float)
    n = eps.size
    sigma2_0 = float(np.var(eps))
    if not sigma2_0 > 0:
        raise OptimizerFailed("residual variance is zero")

    def objective(x):
        omega, alpha, beta = _to_natural(x)
        ll = garch_loglik(eps, omega, alpha, beta, sigma2_0)
        return -ll / n if np.isfinite(ll) else 1e10

    alpha0, beta0 = 0.05, 0.9
    x0 = np.array([
        np.log(sigma2_0 * (1.0 - alpha0 - beta0)),
        logit(alpha0 + beta0),
        logit(alpha0 / (alpha0 + beta0)),
    ])
    f0 = objective(x0)
    warmup = minimize(objective, x0, method='BFGS', options={'maxiter': 5})
    if np.isfinite(warmup.fun) and warmup.fun < f0:
        result = minimize(objective, warmup.x, method='BFGS', options={'gtol': 1e-7, 'maxiter': 1000})
        if not (np.isfinite(result.fun) and result.fun <= warmup.fun):
            result = warmup
    else:
        logger.debug("BFGS made no progress in 5 iterations; switching to Nelder-Mead")
        result = minimize(
            objective, x0, method='Nelder-Mead',
            options={'xatol': 1e-8, 'fatol': 1e-12, 'maxiter': 5000},
        )
    if not np.isfinite(result.fun) or result.fun >= 1e10:
        raise OptimizerFailed(str(result.message))

    omega, alpha, beta = _to_natural(result.x)
    natural = np.array([omega, alpha, beta])

    def negll(theta):
        return -garch_loglik(eps, theta[0], theta[1], theta[2], sigma2_0)

    std_errors = (float('nan'),) * 3
    try:
        cov = np.linalg.inv(_numerical_hessian(negll, natural))
        diag = np.diag(cov)
        std_errors = tuple(float(np.sqrt(d)) if d > 0 else float('nan') for d in diag)
    except np.linalg.LinAlgError:
        logger.warning("GARCH Hessian is singular; standard errors unavailable")

    params = GarchParams(omega, alpha, beta, std_errors)
    return params, -result.fun * n, sigma2_0


# ============================================================
# Full fit, order selection, forecasting
# ============================================================

def fit(log_y: Sequence[float], exog: np.ndarray | None, spec: ArmaxSpec) -> FittedArmaxGarch:
    """Two-stage ARMA(X)-GARCH(1,1) estimate."""
    y = np.asarray(log_y, dtype=float)
    p, q = spec.p, spec.q
    if y.size <= 10 * (p + q + 2):
        raise TrainingError(f"series of length {y.size} too short for ARMA({p},{q})")

    exog_std = None
    exog_mean, exog_scale = np.zeros(0), np.ones(0)
    if spec.use_exog:
        if exog is None:
            raise ShapeMismatch("use_exog is set but no exogenous matrix was given")
        exog = np.asarray(exog, dtype=float)
        if exog.shape != (y.size, spec.exog_dim):
            raise ShapeMismatch(f"exog shape {exog.shape} != {(y.size, spec.exog_dim)}")
        exog_std, exog_mean, exog_scale = _standardize(exog)

    coef, residuals = fit_mean_equation(y, exog_std, p, q)
    phi, theta = coef[1:1 + p], coef[1 + p:1 + p + q]
    check_stationary(phi)

    garch, loglik, sigma2_0 = fit_garch(residuals)
    sigma2 = garch_variance(residuals, garch.omega, garch.alpha, garch.beta, sigma2_0)
    aic = 2.0 * spec.n_params - 2.0 * loglik
    logger.debug(
        f"ARMA({p},{q}){'X' if spec.use_exog else ''}-GARCH(1,1): "
        f"loglik {loglik:.3f}, AIC {aic:.3f}, garch {garch.values.round(5).tolist()}"
    )
    return FittedArmaxGarch(
        spec=spec,
        mu=float(coef[0]),
        phi=phi,
        theta=theta,
        psi=coef[1 + p + q:],
        garch=garch,
        loglik=loglik,
        aic=aic,
        residuals=residuals,
        sigma2=sigma2,
        y_mean=float(y.mean()),
        sigma2_0=sigma2_0,
        exog_mean=exog_mean,
        exog_scale=exog_scale,
    )


def _try_fit(log_y, exog, spec) -> tuple[ArmaxSpec, FittedArmaxGarch | None, str]:
    try:
        return spec, fit(log_y, exog, spec), 'ok'
    except TrainingError as e:
        return spec, None, str(e)


def select_order(
    log_y: Sequence[float],
    exog: np.ndarray | None,
    p_range: Sequence[int],
    q_range: Sequence[int],
    n_jobs: int = 1,
) -> tuple[ArmaxSpec, pd.DataFrame]:
    """Exhaustive AIC search; ties go to smaller p + q, then smaller p."""
    use_exog = exog is not None
    exog_dim = 0 if exog is None else int(np.asarray(exog).shape[1])
    specs = [
        ArmaxSpec(p, q, use_exog=use_exog, exog_dim=exog_dim)
        for p, q in itertools.product(p_range, q_range)
    ]
    results = Parallel(n_jobs=n_jobs)(delayed(_try_fit)(log_y, exog, spec) for spec in specs)

    rows = []
    for spec, fitted, status in results:
        if fitted is None:
            logger.warning(f"ARMA({spec.p},{spec.q}) failed: {status}")
        rows.append({
            'p': spec.p,
            'q': spec.q,
            'loglik': fitted.loglik if fitted else float('nan'),
            'aic': fitted.aic if fitted else float('nan'),
            'status': status,
        })
    table = pd.DataFrame(rows)
    ok = table[table['status'] == 'ok']
    if ok.empty:
        raise AllFitsFailed(f"all {len(specs)} ARMA candidates failed")

    ranked = ok.assign(order=ok['p'] + ok['q']).sort_values(['aic', 'order', 'p'], kind='stable')
    best = ranked.iloc[0]
    logger.info(f"Selected ARMA({int(best['p'])},{int(best['q'])}) with AIC {best['aic']:.3f}")
    return ArmaxSpec(int(best['p']), int(best['q']), use_exog=use_exog, exog_dim=exog_dim), table


def _scaled_exog(fitted: FittedArmaxGarch, exog_t) -> np.ndarray:
    if not fitted.spec.use_exog:
        return np.zeros(0)
    if exog_t is None:
        raise ShapeMismatch("model uses exogenous features; exog_t is required")
    return (np.asarray(exog_t, dtype=float) - fitted.exog_mean) / fitted.exog_scale


def forecast(
    fitted: FittedArmaxGarch,
    history: GarchHistory,
    exog_t: np.ndarray | None = None,
) -> tuple[float, float]:
    """One-step conditional mean and variance of log-volume."""
    p, q = fitted.spec.p, fitted.spec.q
    y_hist = np.asarray(history.log_y, dtype=float)
    e_hist = np.asarray(history.residuals, dtype=float)
    if y_hist.size < p or e_hist.size < q:
        raise ValueError(f"history must hold at least {max(p, q)} observations")

    mean = fitted.mu + fitted.phi @ y_hist[::-1][:p] + fitted.theta @ e_hist[::-1][:q]
    if fitted.spec.use_exog:
        mean += fitted.psi @ _scaled_exog(fitted, exog_t)
    g = fitted.garch
    var = g.omega + g.alpha * e_hist[-1] ** 2 + g.beta * history.sigma2
    return float(mean), float(var)


def rolling_forecast(
    fitted: FittedArmaxGarch,
    log_y: Sequence[float],
    exog: np.ndarray | None,
    start: int,
) -> tuple[np.ndarray, np.ndarray]:
    """One-step forecasts for every index >= start, filtering the whole series.

    The conditional mean at t is y_t − ε_t; the variance is the GARCH σ²_t.
    """
    y = np.asarray(log_y, dtype=float)
    p, q = fitted.spec.p, fitted.spec.q
    lags = _lag_matrix(y, p, fitted.y_mean)
    exog_std = None
    if fitted.spec.use_exog:
        exog_std = (np.asarray(exog, dtype=float) - fitted.exog_mean) / fitted.exog_scale
    coef = np.concatenate([[fitted.mu], fitted.phi, fitted.theta, fitted.psi])
    eps = _css_residuals(coef, y, lags, exog_std, p, q)
    g = fitted.garch
    sigma2 = garch_variance(eps, g.omega, g.alpha, g.beta, fitted.sigma2_0)
    mean = y - eps
    return mean[start:], sigma2[start:]


def residual_acf(residuals: Sequence[float], max_lag: int) -> AcfResult:
    """Sample autocorrelations at lags 1..max_lag with the ±1.96/√n band."""
    x = np.asarray(residuals, dtype=float)
    n = x.size
    if n <= max_lag:
        raise ValueError(f"need more than {max_lag} residuals, got {n}")
    x = x - x.mean()
    denom = float(x @ x)
    acf = np.array([float(x[:-k] @ x[k:]) / denom for k in range(1, max_lag + 1)])
    return AcfResult(lags=np.arange(1, max_lag + 1), acf=acf, band=1.96 / np.sqrt(n))


def fit_report(fitted: FittedArmaxGarch) -> dict[str, Any]:
    g = fitted.garch
    names = ('omega', 'alpha', 'beta')
    return {
        'model': 'garch',
        'spec': {
            'p': fitted.spec.p,
            'q': fitted.spec.q,
            'use_exog': fitted.spec.use_exog,
            'exog_dim': fitted.spec.exog_dim,
        },
        'mu': fitted.mu,
        'phi': fitted.phi.tolist(),
        'theta': fitted.theta.tolist(),
        'psi': fitted.psi.tolist(),
        'garch': {
            name: {
                'value': float(value),
                'std_error': float(se),
                'z': float(z),
                'p_value': float(pv),
            }
            for name, value, se, z, pv in zip(names, g.values, g.std_errors, g.z_stats, g.p_values)
        },
        'loglik': fitted.loglik,
        'aic': fitted.aic,
        'y_mean': fitted.y_mean,
        'sigma2_0': fitted.sigma2_0,
        'exog_mean': fitted.exog_mean.tolist(),
        'exog_scale': fitted.exog_scale.tolist(),
    }


def fit_from_report(report: dict[str, Any]) -> FittedArmaxGarch:
    """Rebuild a fit (without in-sample residuals) from its JSON report."""
    spec = ArmaxSpec(**report['spec'])
    g = report['garch']
    garch = GarchParams(
        g['omega']['value'], g['alpha']['value'], g['beta']['value'],
        (g['omega']['std_error'], g['alpha']['std_error'], g['beta']['std_error']),
    )
    return FittedArmaxGarch(
        spec=spec,
        mu=report['mu'],
        phi=np.asarray(report['phi']),
        theta=np.asarray(report['theta']),
        psi=np.asarray(report['psi']),
        garch=garch,
        loglik=report['loglik'],
        aic=report['aic'],
        residuals=np.zeros(0),
        sigma2=np.zeros(0),
        y_mean=report['y_mean'],
        sigma2_0=report['sigma2_0'],
        exog_mean=np.asarray(report['exog_mean']),
        exog_scale=np.asarray(report['exog_scale']),
    )
