# tme_forecast/tme/training.py
"""SGD trajectories, ensemble collection and hyperparameter search for the TME."""

from collections.abc import Sequence
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger

from tme_forecast.errors import DivergedLoss, TooFewInstances
from tme_forecast.preprocess import DatasetSplit, WindowedDataset, WindowScaler
from tme_forecast.seeding import spawn_seeds
from tme_forecast.tme.model import (
    as_arrays,
    data_loss_and_grad,
    l2_penalty,
    regularization_mask,
)
from tme_forecast.tme.optim import Adam
from tme_forecast.tme.params import TmeParams, init_params

SEARCH_RANGES = {
    'learning_rate': (0.0001, 0.001),
    'batch_size': (10, 300),
    'l2_lambda': (0.1, 5.0),
}


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings.

    The learning rate, batch size and L2 strength have recommended search
    ranges (see ``SEARCH_RANGES``); values outside them are allowed and
    reported by ``check_ranges``.
    """
    learning_rate: float = 0.001
    batch_size: int = 64
    l2_lambda: float = 0.1
    n_trajectories: int = 5
    iterates_per_trajectory: int = 4
    burn_in_epochs: int = 5
    max_epochs: int = 30
    seed: int = 0
    l2_on_bias: bool = True
    standardize: bool = True
    tol: float = 1e-6
    n_jobs: int = 1

    def check_ranges(self) -> list[str]:
        problems = []
        for name, (lo, hi) in SEARCH_RANGES.items():
            value = getattr(self, name)
            if not lo <= value <= hi:
                problems.append(f"{name}={value} outside [{lo}, {hi}]")
        if self.n_trajectories < 1:
            problems.append("n_trajectories must be >= 1")
        if self.iterates_per_trajectory < 1:
            problems.append("iterates_per_trajectory must be >= 1")
        return problems

    @property
    def ensemble_size(self) -> int:
        return self.n_trajectories * self.iterates_per_trajectory

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> 'TrainConfig':
        known = {k: v for k, v in data.items() if k in cls.__dataclass_fields__}
        return cls(**known)


@dataclass
class TrajectoryResult:
    """Epoch-end iterates of one SGD run; ``iterates[i]`` is the state after epoch i + 1."""
    seed: int
    dims: tuple[int, ...]
    h: int
    initial: np.ndarray
    iterates: list[np.ndarray] = field(default_factory=list)
    train_loss: list[float] = field(default_factory=list)
    val_nll: list[float] = field(default_factory=list)

    def params(self, epoch: int) -> TmeParams:
        return TmeParams.unflatten(self.iterates[epoch - 1], self.dims, self.h)


@dataclass(frozen=True)
class MemberProvenance:
    trajectory: int
    epoch: int
    seed: int


@dataclass(frozen=True)
class Ensemble:
    members: tuple[TmeParams, ...]
    provenance: tuple[MemberProvenance, ...]
    scaler: WindowScaler
    config: TrainConfig | None = None

    @property
    def M(self) -> int:
        return len(self.members)

    @property
    def S(self) -> int:
        return self.members[0].S

    @property
    def dims(self) -> tuple[int, ...]:
        return self.members[0].dims

    @property
    def h(self) -> int:
        return self.members[0].h


# ============================================================
# Trajectories
# ============================================================

def mean_nll(params: TmeParams, dataset: WindowedDataset) -> float:
    """Average y-scale NLL of a single parameter set."""
    if len(dataset) == 0:
        return float('nan')
    windows, y = as_arrays(dataset)
    loss, _ = data_loss_and_grad(params, windows, y, with_grad=False)
    return loss / len(dataset)


def train_trajectory(config: TrainConfig, split: DatasetSplit, seed: int) -> TrajectoryResult:
    """One Adam run over shuffled mini-batches, recording an iterate per epoch.

    The per-step objective is the full-data loss divided by the training size:
    mean batch NLL plus (λ / n_train)·‖Θ‖².
    """
    train = split.train
    n = len(train)
    if n == 0:
        raise TooFewInstances("empty training split")
    windows, y = as_arrays(train)

    rng = np.random.default_rng(seed)
    params = init_params(train.dims, train.h, np.log(y), rng)
    vector = params.flatten()
    reg_mask = regularization_mask(params, config.l2_on_bias)
    reg_weight = config.l2_lambda / n
    optimizer = Adam(lr=config.learning_rate)
    batch_size = max(1, int(config.batch_size))

    result = TrajectoryResult(seed=seed, dims=train.dims, h=train.h, initial=vector.copy())
    previous: float | None = None
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(n)
        total = 0.0
        # Last partial batch is kept
        for start in range(0, n, batch_size):
            idx = order[start:start + batch_size]
            current = params.with_vector(vector)
            loss, grad = data_loss_and_grad(current, [w[idx] for w in windows], y[idx])
            if not np.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise DivergedLoss(f"non-finite loss at epoch {epoch} (seed {seed})")
            _, reg_grad = l2_penalty(vector, reg_mask)
            total += loss
            vector = optimizer.step(vector, grad / idx.size + reg_weight * reg_grad)

        epoch_loss = total / n
        val = mean_nll(params.with_vector(vector), split.validation)
        result.iterates.append(vector.copy())
        result.train_loss.append(epoch_loss)
        result.val_nll.append(val)
        logger.debug(f"seed {seed} epoch {epoch}: train NLL {epoch_loss:.6f}, val NLL {val:.6f}")

        if previous is not None and abs(epoch_loss - previous) < config.tol * abs(previous):
            logger.debug(f"seed {seed} converged at epoch {epoch}")
            break
        previous = epoch_loss
    return result


def select_iterates(result: TrajectoryResult, burn_in_epochs: int, k: int) -> list[int]:
    """Epochs kept from one trajectory, in ascending order.

    The best-validation post-burn-in iterate (earliest on ties) plus the
    latest post-burn-in iterates, up to k. With no post-burn-in iterate the
    last one is kept.
    """
    n_epochs = len(result.iterates)
    post = list(range(burn_in_epochs + 1, n_epochs + 1))
    if not post:
        return [n_epochs]

    chosen: list[int] = []
    val = np.array([result.val_nll[e - 1] for e in post])
    if np.any(np.isfinite(val)):
        chosen.append(post[int(np.nanargmin(val))])
    for epoch in reversed(post):
        if len(chosen) >= k:
            break
        if epoch not in chosen:
            chosen.append(epoch)
    return sorted(chosen)


# ============================================================
# Ensemble
# ============================================================

def _fit_scaler(config: TrainConfig, split: DatasetSplit) -> WindowScaler:
    if config.standardize:
        return WindowScaler.fit(split.train)
    return WindowScaler.identity(split.train.dims)


def scale_split(split: DatasetSplit, scaler: WindowScaler) -> DatasetSplit:
    return DatasetSplit(
        train=scaler.transform(split.train),
        validation=scaler.transform(split.validation),
        test=scaler.transform(split.test),
        fractions=split.fractions,
    )


def collect_ensemble(config: TrainConfig, split: DatasetSplit) -> Ensemble:
    """Train independent trajectories and pool their post-burn-in iterates."""
    if config.n_trajectories < 1:
        raise ValueError("n_trajectories must be >= 1")
    for problem in config.check_ranges():
        logger.warning(f"TrainConfig: {problem}")

    scaler = _fit_scaler(config, split)
    scaled = scale_split(split, scaler)
    seeds = spawn_seeds(config.seed, config.n_trajectories)
    logger.info(
        f"Training {config.n_trajectories} trajectories on {len(split.train)} instances "
        f"(seeds {seeds})"
    )
    results = Parallel(n_jobs=config.n_jobs)(
        delayed(train_trajectory)(config, scaled, seed) for seed in seeds
    )

    members: list[TmeParams] = []
    provenance: list[MemberProvenance] = []
    for j, result in enumerate(results):
        epochs = select_iterates(result, config.burn_in_epochs, config.iterates_per_trajectory)
        if len(epochs) < config.iterates_per_trajectory:
            logger.warning(
                f"Trajectory {j} yielded {len(epochs)} of "
                f"{config.iterates_per_trajectory} requested iterates"
            )
        for epoch in epochs:
            members.append(result.params(epoch))
            provenance.append(MemberProvenance(trajectory=j, epoch=epoch, seed=result.seed))
        logger.info(
            f"Trajectory {j}: {len(result.iterates)} epochs, final train NLL "
            f"{result.train_loss[-1]:.6f}, kept epochs {epochs}"
        )

    return Ensemble(
        members=tuple(members),
        provenance=tuple(provenance),
        scaler=scaler,
        config=config,
    )


# ============================================================
# Hyperparameter search
# ============================================================

def draw_train_configs(
    base: TrainConfig,
    n_draws: int,
    seed: int,
    ranges: dict[str, Sequence[float]] | None = None,
) -> list[TrainConfig]:
    """Log-uniform learning rate, uniform integer batch size, uniform L2 strength."""
    bounds = {**SEARCH_RANGES, **(ranges or {})}
    rng = np.random.default_rng(seed)
    draws = []
    for _ in range(n_draws):
        lr_lo, lr_hi = bounds['learning_rate']
        lr = float(np.exp(rng.uniform(np.log(lr_lo), np.log(lr_hi))))
        b_lo, b_hi = bounds['batch_size']
        batch = int(rng.integers(int(b_lo), int(b_hi) + 1))
        l2 = float(rng.uniform(*bounds['l2_lambda']))
        draws.append(replace(base, learning_rate=lr, batch_size=batch, l2_lambda=l2))
    return draws


def random_search(
    split: DatasetSplit,
    base: TrainConfig,
    n_draws: int,
    seed: int,
    ranges: dict[str, Sequence[float]] | None = None,
) -> tuple[TrainConfig, pd.DataFrame]:
    """One trajectory per draw; the lowest post-burn-in validation NLL wins."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    configs = draw_train_configs(base, n_draws, seed, ranges)
    scaled = scale_split(split, _fit_scaler(base, split))
    traj_seeds = spawn_seeds(seed, n_draws)

    results = Parallel(n_jobs=base.n_jobs)(
        delayed(train_trajectory)(cfg, scaled, s) for cfg, s in zip(configs, traj_seeds)
    )
    rows = []
    for k, (cfg, result) in enumerate(zip(configs, results)):
        post = result.val_nll[cfg.burn_in_epochs:] or result.val_nll[-1:]
        score = float(np.nanmin(post)) if np.any(np.isfinite(post)) else float('inf')
        rows.append({
            'draw': k,
            'learning_rate': cfg.learning_rate,
            'batch_size': cfg.batch_size,
            'l2_lambda': cfg.l2_lambda,
            'val_nll': score,
        })
        logger.debug(f"draw {k}: {rows[-1]}")
    table = pd.DataFrame(rows)
    best = int(table['val_nll'].to_numpy().argmin())
    logger.info(f"Random search best draw {best}: val NLL {table['val_nll'].iloc[best]:.6f}")
    return configs[best], table
