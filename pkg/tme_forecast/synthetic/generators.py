# tme_forecast/synthetic/generators.py
"""Seeded data generators: TME mixtures, ARMA-GARCH paths, intraday volume and market files.

Everything here runs forward with its own arithmetic so the results can be
used to check the fitting code.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from loguru import logger
from numpy.lib.stride_tricks import sliding_window_view
from scipy.optimize import brentq
from scipy.signal import lfilter

from tme_forecast.config import HORIZONS
from tme_forecast.market_data import (
    ALL_SOURCES,
    BookSnapshot,
    Market,
    Side,
    TradeRecord,
    write_book,
    write_trades,
)
from tme_forecast.preprocess import WindowedDataset
from tme_forecast.preprocess.seasonal import SECONDS_PER_DAY
from tme_forecast.tme.params import GateParams, SourceParams, TmeParams

# 2020-01-01T00:00:00Z, aligned to a day boundary
START_TS = 1_577_836_800

DESEASONALIZED_LOG_MEAN = -1.3627
DESEASONALIZED_LOG_VAR = 3.7658
ZERO_RATE = 0.0225

DAY_PROCESSES = 17
DAY_PERSISTENCE = 0.5
INTRADAY_PROCESSES = 4
INTRADAY_PERSISTENCE = 0.7
VOLUME_LEVEL = np.log(5.0)

MARKET_FILES = {
    'target_trades': 'trades_target.csv',
    'target_book': 'book_target.csv',
    'external_trades': 'trades_external.csv',
    'external_book': 'book_external.csv',
}


def _ar1(rng: np.random.Generator, n: int, k: int, phi: float) -> np.ndarray:
    """k independent unit-variance AR(1) columns of length n, started stationary."""
    e = rng.standard_normal((n, k))
    if phi == 0.0:
        return e
    x0 = rng.standard_normal(k)
    scale = np.sqrt(1.0 - phi * phi)
    out, _ = lfilter([scale], [1.0, -phi], e, axis=0, zi=(phi * x0)[None, :])
    return out


# ============================================================
# TME mixture data
# ============================================================

@dataclass(frozen=True)
class TmeGenerativeSpec:
    """True parameters plus the feature process that feeds them.

    ``feature_process`` is ``'ar1'`` (per-feature AR(1) with coefficient
    ``persistence``), ``'iid'`` or ``'static'`` (one window repeated for
    every instance).
    """
    params: TmeParams
    n: int
    persistence: float = 0.7
    feature_process: str = 'ar1'
    seed: int = 0
    interval: float = 60.0
    start: float = 0.0

    def __post_init__(self):
        if self.feature_process not in ('ar1', 'iid', 'static'):
            raise ValueError(f"unknown feature process {self.feature_process!r}")
        if not 0.0 <= self.persistence < 1.0:
            raise ValueError("persistence must lie in [0, 1)")
        if self.params.S > len(ALL_SOURCES):
            raise ValueError(f"at most {len(ALL_SOURCES)} sources are supported")
        if not np.all(np.isfinite(self.params.flatten())):
            raise ValueError("generative parameters must be finite")


@dataclass(frozen=True)
class TmeSimulation:
    """Generated dataset and its ground truth: chosen source, gate and component moments."""
    dataset: WindowedDataset
    z: np.ndarray
    probs: np.ndarray
    mu: np.ndarray
    sigma2: np.ndarray
    params: TmeParams = field(repr=False)

    def oracle_mean(self) -> np.ndarray:
        return np.sum(self.probs * np.exp(self.mu + 0.5 * self.sigma2), axis=1)

    def oracle_var(self) -> np.ndarray:
        means = np.exp(self.mu + 0.5 * self.sigma2)
        second = np.exp(2.0 * self.mu + 2.0 * self.sigma2)
        mean = np.sum(self.probs * means, axis=1)
        return np.sum(self.probs * second, axis=1) - mean * mean

    def oracle_nll(self) -> np.ndarray:
        """Per-instance negative log-density of y under the true mixture."""
        log_y = np.log(self.dataset.y)[:, None]
        log_f = (
            -log_y
            - 0.5 * np.log(2.0 * np.pi * self.sigma2)
            - (log_y - self.mu) ** 2 / (2.0 * self.sigma2)
        )
        peak = log_f.max(axis=1, keepdims=True)
        return -(peak[:, 0] + np.log(np.sum(self.probs * np.exp(log_f - peak), axis=1)))


def _feature_windows(spec: TmeGenerativeSpec, rng: np.random.Generator) -> list[np.ndarray]:
    h, n = spec.params.h, spec.n
    windows = []
    for d in spec.params.dims:
        if spec.feature_process == 'static':
            windows.append(np.broadcast_to(rng.standard_normal((d, h)), (n, d, h)))
            continue
        phi = spec.persistence if spec.feature_process == 'ar1' else 0.0
        series = _ar1(rng, n + h - 1, d, phi)
        # window[k, i, j] = series[k + j, i]
        windows.append(np.ascontiguousarray(sliding_window_view(series, h, axis=0)[:n]))
    return windows


def gen_tme_data(spec: TmeGenerativeSpec) -> TmeSimulation:
    """Run the gated log-normal mixture forward for ``spec.n`` instances."""
    rng = np.random.default_rng(spec.seed)
    params = spec.params
    windows = _feature_windows(spec, rng)

    mu = np.empty((spec.n, params.S))
    sigma2 = np.empty_like(mu)
    logits = np.empty_like(mu)
    for s, (theta, X) in enumerate(zip(params.sources, windows)):
        mu[:, s] = np.einsum('nij,i,j->n', X, theta.L_mu, theta.R_mu) + theta.b_mu
        sigma2[:, s] = np.exp(np.einsum('nij,i,j->n', X, theta.L_sigma, theta.R_sigma) + theta.b_sigma)
        logits[:, s] = (
            np.einsum('nij,i,j->n', X, params.gate.L_z[s], params.gate.R_z[s]) + params.gate.b_z[s]
        )
    shifted = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = shifted / shifted.sum(axis=1, keepdims=True)

    u = rng.random(spec.n)
    z = np.minimum((u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), params.S - 1)
    rows = np.arange(spec.n)
    y = np.exp(mu[rows, z] + np.sqrt(sigma2[rows, z]) * rng.standard_normal(spec.n))

    h = params.h
    t = spec.start + (np.arange(spec.n) + h) * spec.interval
    dataset = WindowedDataset(
        sources=ALL_SOURCES[:params.S],
        t=t,
        v=y,
        a=np.ones(spec.n),
        y=y,
        windows=tuple(windows),
    )
    logger.debug(f"Generated {spec.n} TME instances, source shares {np.bincount(z, minlength=params.S) / spec.n}")
    return TmeSimulation(dataset=dataset, z=z, probs=probs, mu=mu, sigma2=sigma2, params=params)


def informative_source_spec(
    dims: tuple[int, ...] = tuple(s.dim for s in ALL_SOURCES),
    h: int = 10,
    n: int = 20_000,
    seed: int = 0,
    level: float = 2.0,
    signal: float = 1.0,
    signal_var: float = 0.1,
    gate_bias: float = 3.0,
    persistence: float = 0.7,
) -> TmeGenerativeSpec:
    """Only source 1's window moves μ; the other sources have constant μ and σ² = 1.

    The gate is constant and favours source 1 through ``b_z = (gate_bias, 0, ...)``.
    """
    rng = np.random.default_rng(seed)
    d1 = dims[0]
    L = rng.standard_normal(d1)
    L /= np.linalg.norm(L)
    R = 0.5 ** np.arange(h - 1, -1, -1.0)
    R /= np.linalg.norm(R)

    sources = [
        SourceParams(signal * L, R, level, np.zeros(d1), np.zeros(h), float(np.log(signal_var)))
    ]
    for d in dims[1:]:
        sources.append(SourceParams(np.zeros(d), np.zeros(h), level, np.zeros(d), np.zeros(h), 0.0))
    b_z = np.zeros(len(dims))
    b_z[0] = gate_bias
    gate = GateParams(
        L_z=tuple(np.zeros(d) for d in dims),
        R_z=tuple(np.zeros(h) for _ in dims),
        b_z=b_z,
    )
    return TmeGenerativeSpec(
        params=TmeParams(tuple(sources), gate),
        n=n,
        persistence=persistence,
        seed=seed,
    )


# ============================================================
# ARMA-GARCH paths
# ============================================================

@dataclass(frozen=True)
class GarchSimSpec:
    omega: float
    alpha: float
    beta: float
    n: int
    seed: int = 0
    mean: float = 0.0
    phi: tuple[float, ...] = ()
    theta: tuple[float, ...] = ()
    burn_in: int = 1000

    def __post_init__(self):
        if self.omega <= 0 or self.alpha < 0 or self.beta < 0:
            raise ValueError("GARCH parameters must satisfy omega > 0, alpha >= 0, beta >= 0")
        if self.alpha + self.beta >= 1.0:
            raise ValueError(f"alpha + beta = {self.alpha + self.beta} must be < 1")
        if self.phi and np.any(np.abs(np.roots(np.r_[1.0, -np.asarray(self.phi)])) >= 1.0):
            raise ValueError(f"AR coefficients {self.phi} are not stationary")

    @property
    def unconditional_variance(self) -> float:
        return self.omega / (1.0 - self.alpha - self.beta)


@dataclass(frozen=True)
class GarchSimulation:
    log_y: np.ndarray
    residuals: np.ndarray
    sigma2: np.ndarray


def gen_garch_series(spec: GarchSimSpec) -> GarchSimulation:
    """ε_t = σ_t e_t with σ²_t = ω + α ε²_{t-1} + β σ²_{t-1}, then the optional ARMA filter."""
    rng = np.random.default_rng(spec.seed)
    total = spec.n + spec.burn_in
    e = rng.standard_normal(total)
    eps = np.empty(total)
    sigma2 = np.empty(total)
    s2 = spec.unconditional_variance
    for t in range(total):
        sigma2[t] = s2
        eps[t] = np.sqrt(s2) * e[t]
        s2 = spec.omega + spec.alpha * eps[t] * eps[t] + spec.beta * s2

    x = eps
    if spec.phi or spec.theta:
        x = lfilter(np.r_[1.0, spec.theta], np.r_[1.0, -np.asarray(spec.phi, dtype=float)], eps)
    keep = slice(spec.burn_in, None)
    return GarchSimulation(
        log_y=spec.mean + x[keep],
        residuals=eps[keep],
        sigma2=sigma2[keep],
    )


# ============================================================
# Intraday volume
# ============================================================

@dataclass(frozen=True)
class IntradayVolume:
    t: np.ndarray
    v: np.ndarray
    interval: float
    profile: np.ndarray = field(repr=False)
    scale: float = 0.0
    zero_mask: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=bool), repr=False)


def diurnal_profile(n_slots: int) -> np.ndarray:
    """Smooth intraday shape with unit mean over the day."""
    x = 2.0 * np.pi * np.arange(n_slots) / n_slots
    shape = np.exp(1.2 * np.cos(x) + 0.3 * np.cos(2.0 * x))
    return shape / shape.mean()


def _deseasonalized_log_mean(
    scale: float, q: np.ndarray, slots: np.ndarray, n_slots: int, kept: np.ndarray,
) -> float:
    """Log-mean of the non-zero intervals over slot means that count zeros as volume 0."""
    w = np.where(kept, np.exp(-scale * q), 0.0)
    slot_mean = np.bincount(slots, weights=w, minlength=n_slots) / np.bincount(slots, minlength=n_slots)
    return float(np.mean(-scale * q[kept] - np.log(slot_mean[slots[kept]])))


def gen_intraday_volume(
    horizon: str = '1m',
    days: int = 90,
    seed: int = 0,
    zero_rate: float = ZERO_RATE,
    target_mean: float = DESEASONALIZED_LOG_MEAN,
) -> IntradayVolume:
    """Raw volume = diurnal profile × exp(level − c·Q) with zeros injected.

    Q is a sum of squared unit-variance AR(1) processes, 17 that move once a
    day and 4 that move every interval, so log-volume has a reflected-gamma
    marginal. The scale c is solved so the deseasonalized log-volume of the
    non-zero intervals has mean ``target_mean`` when the slot means count
    zeros as volume 0.
    """
    if days < 2:
        raise ValueError("days must be >= 2")
    if horizon not in HORIZONS:
        raise ValueError(f"horizon must be one of {sorted(HORIZONS)}")
    if not 0.0 <= zero_rate < 1.0:
        raise ValueError("zero_rate must lie in [0, 1)")

    interval = float(HORIZONS[horizon])
    n_slots = int(SECONDS_PER_DAY // interval)
    n = days * n_slots
    rng = np.random.default_rng(seed)

    daily = np.repeat(_ar1(rng, days, DAY_PROCESSES, DAY_PERSISTENCE), n_slots, axis=0)
    intraday = _ar1(rng, n, INTRADAY_PROCESSES, INTRADAY_PERSISTENCE)
    q = np.sum(daily * daily, axis=1) + np.sum(intraday * intraday, axis=1)

    zero_mask = np.zeros(n, dtype=bool)
    zero_mask[rng.choice(n, size=int(round(zero_rate * n)), replace=False)] = True
    slots = np.tile(np.arange(n_slots), days)
    kept = ~zero_mask

    def gap(c: float) -> float:
        return _deseasonalized_log_mean(c, q, slots, n_slots, kept) - target_mean

    lo, hi = 1e-4, 5.0
    if gap(lo) <= 0 or gap(hi) >= 0:
        raise ValueError(f"cannot reach deseasonalized log-mean {target_mean}")
    scale = float(brentq(gap, lo, hi, xtol=1e-12))
    # c² · 2 · (number of processes) is the log-variance of the χ² construction
    moment_scale = np.sqrt(DESEASONALIZED_LOG_VAR / (2 * (DAY_PROCESSES + INTRADAY_PROCESSES)))
    logger.debug(f"Volume scale {scale:.6f} (variance-matched {moment_scale:.6f})")

    profile = diurnal_profile(n_slots)
    v = profile[slots] * np.exp(VOLUME_LEVEL - scale * q)
    v[zero_mask] = 0.0
    t = START_TS + np.arange(n) * interval
    logger.info(
        f"Generated {days} days of {horizon} volume ({n} intervals, {int(zero_mask.sum())} zeros)"
    )
    return IntradayVolume(t=t, v=v, interval=interval, profile=profile, scale=scale, zero_mask=zero_mask)


# ============================================================
# Market files
# ============================================================

@dataclass(frozen=True)
class MarketFiles:
    trades: dict[Market, list[TradeRecord]]
    books: dict[Market, list[BookSnapshot]]
    depth: int

    def write(self, out_dir: Path | str) -> dict[str, Path]:
        """Write the four CSVs; returns their paths keyed like ``MARKET_FILES``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {key: out / name for key, name in MARKET_FILES.items()}
        for market in Market:
            write_trades(self.trades[market], paths[f"{market.value}_trades"])
            write_book(self.books[market], paths[f"{market.value}_book"], self.depth)
        logger.info(f"Wrote synthetic market files to {out}")
        return paths


def _trades_for(
    rng: np.random.Generator,
    t: np.ndarray,
    v: np.ndarray,
    interval: float,
    mid: np.ndarray,
    half_spread: np.ndarray,
) -> list[TradeRecord]:
    """1 + Poisson(1) trades per non-empty interval whose sizes sum to its volume."""
    active = np.flatnonzero(v > 0)
    counts = 1 + rng.poisson(1.0, active.size)
    owner = np.repeat(active, counts)
    weights = rng.gamma(1.0, size=owner.size)
    totals = np.bincount(owner, weights=weights, minlength=v.size)
    sizes = v[owner] * weights / totals[owner]
    offsets = rng.integers(0, int(interval), owner.size)
    order = np.lexsort((offsets, owner))
    owner, sizes, offsets = owner[order], sizes[order], offsets[order]
    is_buy = rng.random(owner.size) < 0.5
    prices = mid[owner] + np.where(is_buy, half_spread[owner], -half_spread[owner])
    timestamps = t[owner] + offsets
    return [
        TradeRecord(timestamp=float(ts), price=float(p), size=float(s), side=Side.BUY if b else Side.SELL)
        for ts, p, s, b in zip(timestamps, prices, sizes, is_buy)
    ]


def _books_for(
    rng: np.random.Generator,
    t: np.ndarray,
    interval: float,
    mid: np.ndarray,
    half_spread: np.ndarray,
    depth: int,
) -> list[BookSnapshot]:
    """One snapshot in the middle of each interval."""
    tick = 0.01
    steps = np.arange(depth) * tick
    bid_px = mid[:, None] - half_spread[:, None] - steps
    ask_px = mid[:, None] + half_spread[:, None] + steps
    bid_sz = rng.gamma(2.0, 1.0, (t.size, depth))
    ask_sz = rng.gamma(2.0, 1.0, (t.size, depth))
    stamp = t + interval // 2
    return [
        BookSnapshot(
            timestamp=float(stamp[k]),
            bids=tuple(zip(bid_px[k].tolist(), bid_sz[k].tolist())),
            asks=tuple(zip(ask_px[k].tolist(), ask_sz[k].tolist())),
        )
        for k in range(t.size)
    ]


def gen_market_files(
    t: np.ndarray,
    v: np.ndarray,
    interval: float,
    seed: int = 0,
    depth: int = 5,
    base_price: float = 100.0,
) -> MarketFiles:
    """Trades and books for both markets; target trade sizes add up to ``v`` per interval."""
    t = np.asarray(t, dtype=float)
    v = np.asarray(v, dtype=float)
    rng = np.random.default_rng(seed)
    mid = base_price * np.exp(np.cumsum(rng.normal(0.0, 1e-3, t.size)))
    half_spread = 0.5 * mid * rng.uniform(2e-4, 1e-3, t.size)

    external_v = np.where(v > 0, v * np.exp(rng.normal(0.0, 0.5, v.size)), 0.0)
    external_mid = mid * (1.0 + rng.normal(0.0, 1e-4, t.size))
    trades = {
        Market.TARGET: _trades_for(rng, t, v, interval, mid, half_spread),
        Market.EXTERNAL: _trades_for(rng, t, external_v, interval, external_mid, half_spread),
    }
    books = {
        Market.TARGET: _books_for(rng, t, interval, mid, half_spread, depth),
        Market.EXTERNAL: _books_for(rng, t, interval, external_mid, half_spread, depth),
    }
    return MarketFiles(trades=trades, books=books, depth=depth)
