# tme_forecast/synthetic/oracles.py
"""Brute-force checks for the analytic gradient and the ensemble predictive moments."""

from collections.abc import Callable
from dataclasses import dataclass

import numpy as np

from tme_forecast.errors import NonFiniteLoss
from tme_forecast.preprocess import ModelInstance
from tme_forecast.tme.params import TmeParams
from tme_forecast.tme.training import Ensemble

JACKKNIFE_GROUPS = 100
MIN_DRAWS = 10_000


def fd_gradient(
    loss: Callable,
    params: np.ndarray | TmeParams,
    step: float = 1e-5,
) -> np.ndarray | TmeParams:
    """Central differences (L(θ + δe_i) − L(θ − δe_i)) / 2δ per coordinate.

    ``loss`` receives the same kind of object it is differentiated at: a flat
    vector or a ``TmeParams``; the gradient comes back in that form.
    """
    structured = isinstance(params, TmeParams)
    theta = params.flatten() if structured else np.asarray(params, dtype=float).copy()

    def evaluate(vector: np.ndarray) -> float:
        value = float(loss(params.with_vector(vector) if structured else vector))
        if not np.isfinite(value):
            raise NonFiniteLoss(f"loss is {value} during finite differencing")
        return value

    evaluate(theta)
    grad = np.empty_like(theta)
    for i in range(theta.size):
        original = theta[i]
        theta[i] = original + step
        upper = evaluate(theta)
        theta[i] = original - step
        lower = evaluate(theta)
        theta[i] = original
        grad[i] = (upper - lower) / (2.0 * step)
    return params.with_vector(grad) if structured else grad


def gradient_rel_error(
    analytic: np.ndarray,
    numeric: np.ndarray,
    abs_floor: float = 1e-7,
) -> float:
    """Largest per-coordinate relative error ``|a − n| / max(|n|, abs_floor)``.

    Coordinates whose absolute error is within ``abs_floor`` count as exact,
    which absorbs finite-difference noise on near-zero partials.
    """
    analytic = np.ravel(np.asarray(analytic, dtype=float))
    numeric = np.ravel(np.asarray(numeric, dtype=float))
    if analytic.shape != numeric.shape:
        raise ValueError(f"gradient shapes differ: {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    abs_err = np.abs(analytic - numeric)
    rel = abs_err / np.maximum(np.abs(numeric), abs_floor)
    rel[abs_err <= abs_floor] = 0.0
    return float(rel.max())


@dataclass(frozen=True)
class McMoments:
    mean: float
    var: float
    mean_se: float
    var_se: float
    n_draws: int


def _member_components(member: TmeParams, windows: list[np.ndarray]):
    """(mu, sigma2, gate) for one member, written out with plain sums."""
    S = member.S
    mu, sigma2, logits = np.empty(S), np.empty(S), np.empty(S)
    for s in range(S):
        theta, X = member.sources[s], windows[s]
        mu[s] = np.sum(theta.L_mu[:, None] * X * theta.R_mu[None, :]) + theta.b_mu
        sigma2[s] = np.exp(np.sum(theta.L_sigma[:, None] * X * theta.R_sigma[None, :]) + theta.b_sigma)
        logits[s] = (
            np.sum(member.gate.L_z[s][:, None] * X * member.gate.R_z[s][None, :]) + member.gate.b_z[s]
        )
    gate = np.exp(logits - logits.max())
    return mu, sigma2, gate / gate.sum()


def _jackknife_se(y: np.ndarray) -> tuple[float, float]:
    """Leave-one-group-out standard errors of the sample mean and variance."""
    groups = np.array_split(y, JACKKNIFE_GROUPS)
    s1 = np.array([g.sum() for g in groups])
    s2 = np.array([(g * g).sum() for g in groups])
    n_out = y.size - np.array([g.size for g in groups], dtype=float)
    mean_out = (s1.sum() - s1) / n_out
    var_out = (s2.sum() - s2) / n_out - mean_out * mean_out
    G = len(groups)

    def se(estimates: np.ndarray) -> float:
        return float(np.sqrt((G - 1) / G * np.sum((estimates - estimates.mean()) ** 2)))

    return se(mean_out), se(var_out)


def mc_mixture_moments(
    ensemble: Ensemble,
    instance: ModelInstance,
    n_draws: int,
    seed: int = 0,
) -> McMoments:
    """Sample member, then source from its gate, then y; grouped-jackknife standard errors."""
    if n_draws < MIN_DRAWS:
        raise ValueError(f"n_draws must be >= {MIN_DRAWS}")
    scaled = [
        (np.asarray(w, dtype=float) - m[:, None]) / s[:, None]
        for w, m, s in zip(instance.windows, ensemble.scaler.means, ensemble.scaler.scales)
    ]
    parts = [_member_components(member, scaled) for member in ensemble.members]
    mu = np.array([p[0] for p in parts])
    sigma2 = np.array([p[1] for p in parts])
    gates = np.array([p[2] for p in parts])

    rng = np.random.default_rng(seed)
    m = rng.integers(0, ensemble.M, n_draws)
    cum = np.cumsum(gates, axis=1)[m]
    s = np.minimum((rng.random(n_draws)[:, None] >= cum).sum(axis=1), ensemble.S - 1)
    y = np.exp(mu[m, s] + np.sqrt(sigma2[m, s]) * rng.standard_normal(n_draws))

    mean_se, var_se = _jackknife_se(y)
    return McMoments(
        mean=float(np.mean(y)),
        var=float(np.var(y)),
        mean_se=mean_se,
        var_se=var_se,
        n_draws=n_draws,
    )
