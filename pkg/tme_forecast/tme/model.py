# tme_forecast/tme/model.py
"""Mixture math: bilinear log-normal components, softmax gate, NLL and its gradient."""

from collections.abc import Sequence

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from tme_forecast.errors import LogNormalOverflow, NonPositiveTarget, ShapeMismatch
from tme_forecast.preprocess import ModelInstance, WindowedDataset
from tme_forecast.tme.params import (
    GateParams,
    SourceParams,
    TmeParams,
    bias_mask,
    param_count,
)

ETA_CLIP = 30.0
SIGMA2_FLOOR = 1e-8
# exp(2μ + 2σ²) must stay below the float64 range
LOG_MOMENT_BOUND = 354.0
LOG_2PI = float(np.log(2.0 * np.pi))

Batch = WindowedDataset | ModelInstance | Sequence[ModelInstance]


# ============================================================
# Batch handling
# ============================================================

def as_arrays(batch: Batch) -> tuple[list[np.ndarray], np.ndarray]:
    """(windows per source as (n, d_s, h), y as (n,)) for any batch form."""
    if isinstance(batch, WindowedDataset):
        return list(batch.windows), np.asarray(batch.y, dtype=float)
    if isinstance(batch, ModelInstance):
        return [w[None] for w in batch.windows], np.array([batch.y], dtype=float)
    instances = list(batch)
    if not instances:
        raise ShapeMismatch("empty batch")
    n_sources = len(instances[0].windows)
    windows = [np.stack([inst.windows[s] for inst in instances]) for s in range(n_sources)]
    return windows, np.array([inst.y for inst in instances], dtype=float)


def _check_windows(params: TmeParams, windows: Sequence[np.ndarray]) -> None:
    if len(windows) != params.S:
        raise ShapeMismatch(f"expected {params.S} source windows, got {len(windows)}")
    for s, (theta, X) in enumerate(zip(params.sources, windows)):
        if X.shape[1:] != (theta.d, theta.h):
            raise ShapeMismatch(
                f"source {s}: window shape {X.shape[1:]} != {(theta.d, theta.h)}"
            )


def _bilinear(L: np.ndarray, X: np.ndarray, R: np.ndarray) -> np.ndarray:
    """Lᵀ X R for a stack of windows X of shape (n, d, h)."""
    return np.einsum('i,nij,j->n', L, X, R)


# ============================================================
# Components and gate
# ============================================================

def source_log_moments(theta: SourceParams, window: np.ndarray):
    """μ = L_μᵀ X R_μ + b_μ and σ² = exp(L_σᵀ X R_σ + b_σ) with the exponent clamped.

    Accepts a single (d, h) window or a stack (n, d, h).
    """
    X = np.asarray(window, dtype=float)
    single = X.ndim == 2
    if single:
        X = X[None]
    if X.ndim != 3 or X.shape[1:] != (theta.d, theta.h):
        raise ShapeMismatch(f"window shape {np.shape(window)} does not match {(theta.d, theta.h)}")
    mu = _bilinear(theta.L_mu, X, theta.R_mu) + theta.b_mu
    eta = _bilinear(theta.L_sigma, X, theta.R_sigma) + theta.b_sigma
    sigma2 = np.exp(np.clip(eta, -ETA_CLIP, ETA_CLIP))
    if single:
        return float(mu[0]), float(sigma2[0])
    return mu, sigma2


def gate_logits(omega: GateParams, windows: Sequence[np.ndarray]) -> np.ndarray:
    """f_s = L_zᵀ x_s R_z + b_z as an (n, S) matrix."""
    return np.stack(
        [_bilinear(L, X, R) + b for L, R, b, X in zip(omega.L_z, omega.R_z, omega.b_z, windows)],
        axis=1,
    )


def gate_probs(omega: GateParams, windows: Sequence[np.ndarray]) -> np.ndarray:
    """Softmax over sources; a single instance's windows give a length-S vector."""
    stacked = [np.asarray(w, dtype=float) for w in windows]
    single = stacked[0].ndim == 2
    if single:
        stacked = [w[None] for w in stacked]
    probs = softmax(gate_logits(omega, stacked), axis=1)
    return probs[0] if single else probs


def component_moments(params: TmeParams, windows: Sequence[np.ndarray]):
    """(mu, sigma2, gate probabilities), each (n, S)."""
    _check_windows(params, windows)
    mu = np.empty((windows[0].shape[0], params.S))
    sigma2 = np.empty_like(mu)
    for s, (theta, X) in enumerate(zip(params.sources, windows)):
        mu[:, s], sigma2[:, s] = source_log_moments(theta, X)
    return mu, sigma2, softmax(gate_logits(params.gate, windows), axis=1)


# ============================================================
# Log-normal helpers
# ============================================================

def lognormal_moments(mu, sigma2):
    """Mean exp(μ + σ²/2) and variance (exp(σ²) − 1)·exp(2μ + σ²)."""
    mu = np.asarray(mu, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    if np.any(sigma2 <= 0):
        raise ValueError("sigma2 must be positive")
    if np.any(mu + sigma2 > LOG_MOMENT_BOUND):
        raise LogNormalOverflow(
            f"mu + sigma2 = {float(np.max(mu + sigma2)):.4g} exceeds {LOG_MOMENT_BOUND}"
        )
    mean = np.exp(mu + 0.5 * sigma2)
    variance = np.expm1(sigma2) * np.exp(2.0 * mu + sigma2)
    if mean.ndim == 0:
        return float(mean), float(variance)
    return mean, variance


def lognormal_logpdf(y, mu, sigma2):
    """ln f(y) for LogNormal(μ, σ²), with σ² floored."""
    log_y = np.log(y)
    s2 = np.maximum(sigma2, SIGMA2_FLOOR)
    return -log_y - 0.5 * (LOG_2PI + np.log(s2)) - (log_y - mu) ** 2 / (2.0 * s2)


def check_targets(y: np.ndarray) -> None:
    if np.any(~(y > 0)):
        raise NonPositiveTarget(f"{int(np.sum(~(y > 0)))} non-positive targets")


# ============================================================
# Loss and gradient
# ============================================================

def data_loss_and_grad(
    params: TmeParams,
    windows: Sequence[np.ndarray],
    y: np.ndarray,
    with_grad: bool = True,
) -> tuple[float, np.ndarray | None]:
    """Σ_t −ln Σ_s p_s f_s(y_t) and its gradient as a flat vector."""
    _check_windows(params, windows)
    y = np.asarray(y, dtype=float)
    check_targets(y)
    n, S = y.size, params.S
    log_y = np.log(y)

    mu = np.empty((n, S))
    eta = np.empty((n, S))
    for s, (theta, X) in enumerate(zip(params.sources, windows)):
        mu[:, s] = _bilinear(theta.L_mu, X, theta.R_mu) + theta.b_mu
        eta[:, s] = _bilinear(theta.L_sigma, X, theta.R_sigma) + theta.b_sigma
    logits = gate_logits(params.gate, windows)

    eta_c = np.clip(eta, -ETA_CLIP, ETA_CLIP)
    raw_s2 = np.exp(eta_c)
    s2 = np.maximum(raw_s2, SIGMA2_FLOOR)
    resid = log_y[:, None] - mu
    log_f = -log_y[:, None] - 0.5 * (LOG_2PI + np.log(s2)) - resid ** 2 / (2.0 * s2)
    log_p = log_softmax(logits, axis=1)
    joint = log_p + log_f
    ll = logsumexp(joint, axis=1)
    loss = float(-ll.sum())
    if not with_grad:
        return loss, None

    r = np.exp(joint - ll[:, None])
    p = np.exp(log_p)
    active = (eta > -ETA_CLIP) & (eta < ETA_CLIP) & (raw_s2 > SIGMA2_FLOOR)
    g_mu = -r * resid / s2
    g_eta = np.where(active, -r * (-0.5 + resid ** 2 / (2.0 * s2)), 0.0)
    g_f = -(r - p)

    parts: list[np.ndarray] = []
    for s, (theta, X) in enumerate(zip(params.sources, windows)):
        parts += [
            np.einsum('n,nij,j->i', g_mu[:, s], X, theta.R_mu),
            np.einsum('n,nij,i->j', g_mu[:, s], X, theta.L_mu),
            np.atleast_1d(g_mu[:, s].sum()),
            np.einsum('n,nij,j->i', g_eta[:, s], X, theta.R_sigma),
            np.einsum('n,nij,i->j', g_eta[:, s], X, theta.L_sigma),
            np.atleast_1d(g_eta[:, s].sum()),
        ]
    gate = params.gate
    for s, X in enumerate(windows):
        parts += [
            np.einsum('n,nij,j->i', g_f[:, s], X, gate.R_z[s]),
            np.einsum('n,nij,i->j', g_f[:, s], X, gate.L_z[s]),
            np.atleast_1d(g_f[:, s].sum()),
        ]
    return loss, np.concatenate(parts)


def l2_penalty(vector: np.ndarray, reg_mask: np.ndarray) -> tuple[float, np.ndarray]:
    """‖Θ‖² over the masked coordinates and its gradient."""
    masked = np.where(reg_mask, vector, 0.0)
    return float(masked @ masked), 2.0 * masked


def regularization_mask(params: TmeParams, l2_on_bias: bool = True) -> np.ndarray:
    size = param_count(params.dims, params.h)
    if l2_on_bias:
        return np.ones(size, dtype=bool)
    return ~bias_mask(params.dims, params.h)


def nll_loss(
    params: TmeParams,
    batch: Batch,
    l2_lambda: float,
    l2_on_bias: bool = True,
) -> float:
    """Negative log-likelihood of the batch plus λ‖Θ‖²."""
    windows, y = as_arrays(batch)
    data, _ = data_loss_and_grad(params, windows, y, with_grad=False)
    penalty, _ = l2_penalty(params.flatten(), regularization_mask(params, l2_on_bias))
    return data + l2_lambda * penalty


def loss_gradient(
    params: TmeParams,
    batch: Batch,
    l2_lambda: float,
    l2_on_bias: bool = True,
) -> TmeParams:
    """Analytic gradient of ``nll_loss``, shaped like the parameters."""
    windows, y = as_arrays(batch)
    _, grad = data_loss_and_grad(params, windows, y)
    _, reg_grad = l2_penalty(params.flatten(), regularization_mask(params, l2_on_bias))
    return params.with_vector(grad + l2_lambda * reg_grad)
