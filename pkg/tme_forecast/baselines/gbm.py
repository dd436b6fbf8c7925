# tme_forecast/baselines/gbm.py
"""Gradient boosting with least-squares regression trees on log-volume."""

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger

from tme_forecast.errors import ShapeMismatch, TooFewSamples
from tme_forecast.preprocess import WindowedDataset
from tme_forecast.seeding import spawn_seeds

SEARCH_RANGES: dict[str, tuple[float, float]] = {
    'n_trees': (100, 1000),
    'max_features_frac': (0.1, 1.0),
    'min_samples_leaf': (2, 9),
    'max_depth': (4, 9),
    'learning_rate': (0.005, 0.05),
}
TIE_TOL = 1e-12


# ============================================================
# Types
# ============================================================

@dataclass(frozen=True)
class Leaf:
    value: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    left: 'TreeNode'
    right: 'TreeNode'


TreeNode = Leaf | Split


@dataclass(frozen=True)
class GbmHyperParams:
    n_trees: int = 300
    max_features_frac: float = 1.0
    min_samples_leaf: int = 2
    max_depth: int | None = 4
    learning_rate: float = 0.05
    seed: int = 0

    def check_ranges(self) -> list[str]:
        problems = []
        for name, (lo, hi) in SEARCH_RANGES.items():
            value = getattr(self, name)
            if value is None or not lo <= value <= hi:
                problems.append(f"{name}={value} outside [{lo}, {hi}]")
        return problems


@dataclass(frozen=True)
class FlatInstances:
    """Concatenated windows (source-major, then feature, then lag) and u = ln y."""
    x: np.ndarray
    u: np.ndarray

    @classmethod
    def from_dataset(cls, dataset: WindowedDataset) -> 'FlatInstances':
        return cls(x=dataset.flat_features(), u=np.log(dataset.y))

    def __len__(self) -> int:
        return int(self.u.size)


@dataclass(frozen=True)
class GbmModel:
    init_value: float
    trees: tuple[tuple[TreeNode, float], ...]
    learning_rate: float
    n_features: int
    hyper: GbmHyperParams
    residual_var: float = 0.0
    stage_mse: tuple[float, ...] = field(default=(), repr=False)


# ============================================================
# Trees
# ============================================================

def _best_split_for_feature(
    x: np.ndarray, r: np.ndarray, min_leaf: int,
) -> tuple[float, float] | None:
    """(sse, threshold) of the best split on one feature, lowest threshold on ties."""
    n = x.size
    order = np.argsort(x, kind='stable')
    xs, rs = x[order], r[order]
    cs = np.cumsum(rs)
    cs2 = np.cumsum(rs * rs)
    total, total2 = cs[-1], cs2[-1]

    k = np.arange(1, n)  # left child holds the first k sorted values
    valid = (xs[:-1] < xs[1:]) & (k >= min_leaf) & (n - k >= min_leaf)
    if not valid.any():
        return None
    left_sum, left_sq = cs[:-1], cs2[:-1]
    sse = (left_sq - left_sum ** 2 / k) + (
        (total2 - left_sq) - (total - left_sum) ** 2 / (n - k)
    )
    sse = np.where(valid, sse, np.inf)
    best = sse.min()
    pos = int(np.flatnonzero(sse <= best + TIE_TOL * max(1.0, abs(best)))[0])
    return float(sse[pos]), float(0.5 * (xs[pos] + xs[pos + 1]))


def _grow(
    x: np.ndarray,
    r: np.ndarray,
    depth: int,
    hyper: GbmHyperParams,
    rng: np.random.Generator,
) -> TreeNode:
    n, n_features = x.shape
    value = float(r.mean())
    if (
        (hyper.max_depth is not None and depth >= hyper.max_depth)
        or n < 2 * hyper.min_samples_leaf
        or np.ptp(r) == 0.0
    ):
        return Leaf(value)

    k = min(n_features, max(1, math.ceil(hyper.max_features_frac * n_features - 1e-9)))
    candidates = np.sort(rng.choice(n_features, size=k, replace=False))
    centered = r - value

    best: tuple[float, int, float] | None = None
    for j in candidates:
        found = _best_split_for_feature(x[:, j], centered, hyper.min_samples_leaf)
        if found is None:
            continue
        sse, threshold = found
        if best is None or sse < best[0] - TIE_TOL * max(1.0, abs(best[0])):
            best = (sse, int(j), threshold)
    if best is None:
        return Leaf(value)

    _, j, threshold = best
    go_left = x[:, j] <= threshold
    return Split(
        feature_index=j,
        threshold=threshold,
        left=_grow(x[go_left], r[go_left], depth + 1, hyper, rng),
        right=_grow(x[~go_left], r[~go_left], depth + 1, hyper, rng),
    )


def fit_tree(
    x: np.ndarray,
    residuals: np.ndarray,
    hyper: GbmHyperParams,
    rng: np.random.Generator | None = None,
) -> TreeNode:
    """Greedy least-squares regression tree on the residuals."""
    x = np.asarray(x, dtype=float)
    residuals = np.asarray(residuals, dtype=float)
    if x.ndim != 2 or x.shape[0] != residuals.size:
        raise ShapeMismatch(f"x {x.shape} and residuals {residuals.shape} disagree")
    if residuals.size < 2 * hyper.min_samples_leaf:
        raise TooFewSamples(
            f"{residuals.size} samples, need at least {2 * hyper.min_samples_leaf}"
        )
    rng = rng if rng is not None else np.random.default_rng(hyper.seed)
    return _grow(x, residuals, 0, hyper, rng)


def predict_tree(node: TreeNode, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[0])
    stack = [(node, np.arange(x.shape[0]))]
    while stack:
        current, idx = stack.pop()
        if isinstance(current, Leaf):
            out[idx] = current.value
            continue
        go_left = x[idx, current.feature_index] <= current.threshold
        stack.append((current.left, idx[go_left]))
        stack.append((current.right, idx[~go_left]))
    return out


def tree_depth(node: TreeNode) -> int:
    if isinstance(node, Leaf):
        return 0
    return 1 + max(tree_depth(node.left), tree_depth(node.right))


# ============================================================
# Boosting
# ============================================================

def gbm_fit(train: FlatInstances, hyper: GbmHyperParams) -> GbmModel:
    """Forward stagewise fitting of trees to squared-loss residuals."""
    if len(train) == 0:
        raise TooFewSamples("empty training set")
    for problem in hyper.check_ranges():
        logger.debug(f"GbmHyperParams: {problem}")

    rng = np.random.default_rng(hyper.seed)
    u = train.u
    f0 = float(u.mean())
    current = np.full(u.size, f0)
    trees: list[tuple[TreeNode, float]] = []
    stage_mse: list[float] = [float(np.mean((u - current) ** 2))]
    for m in range(hyper.n_trees):
        residuals = u - current
        tree = fit_tree(train.x, residuals, hyper, rng)
        current = current + hyper.learning_rate * predict_tree(tree, train.x)
        trees.append((tree, 1.0))
        stage_mse.append(float(np.mean((u - current) ** 2)))
        if (m + 1) % 50 == 0:
            logger.debug(f"GBM stage {m + 1}: train MSE {stage_mse[-1]:.6f}")

    return GbmModel(
        init_value=f0,
        trees=tuple(trees),
        learning_rate=hyper.learning_rate,
        n_features=train.x.shape[1],
        hyper=hyper,
        residual_var=float(np.var(u - current)),
        stage_mse=tuple(stage_mse),
    )


def gbm_predict(model: GbmModel, x: np.ndarray) -> np.ndarray | float:
    """F_0 + Σ learning_rate·β_m·tree_m(x) for one row or a matrix of rows."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    if single:
        x = x[None]
    if x.shape[1] != model.n_features:
        raise ShapeMismatch(f"expected {model.n_features} features, got {x.shape[1]}")
    out = np.full(x.shape[0], model.init_value)
    for tree, scale in model.trees:
        out += model.learning_rate * scale * predict_tree(tree, x)
    return float(out[0]) if single else out


def rmse_u(model: GbmModel, data: FlatInstances) -> float:
    return float(np.sqrt(np.mean((gbm_predict(model, data.x) - data.u) ** 2)))


# ============================================================
# Random search
# ============================================================

def draw_hyper_params(
    n_draws: int,
    seed: int,
    ranges: dict[str, tuple[float, float]] | None = None,
    base: GbmHyperParams | None = None,
) -> list[GbmHyperParams]:
    bounds = {**SEARCH_RANGES, **(ranges or {})}
    base = base or GbmHyperParams()
    rng = np.random.default_rng(seed)
    fit_seeds = spawn_seeds(seed, n_draws)
    draws = []
    for k in range(n_draws):
        lr_lo, lr_hi = bounds['learning_rate']
        draws.append(replace(
            base,
            n_trees=int(rng.integers(int(bounds['n_trees'][0]), int(bounds['n_trees'][1]) + 1)),
            max_features_frac=float(rng.uniform(*bounds['max_features_frac'])),
            min_samples_leaf=int(rng.integers(
                int(bounds['min_samples_leaf'][0]), int(bounds['min_samples_leaf'][1]) + 1
            )),
            max_depth=int(rng.integers(int(bounds['max_depth'][0]), int(bounds['max_depth'][1]) + 1)),
            learning_rate=float(np.exp(rng.uniform(np.log(lr_lo), np.log(lr_hi)))),
            seed=fit_seeds[k],
        ))
    return draws


def _score(hyper: GbmHyperParams, train: FlatInstances, validation: FlatInstances) -> float:
    return rmse_u(gbm_fit(train, hyper), validation)


def random_search(
    train: FlatInstances,
    validation: FlatInstances,
    n_draws: int,
    seed: int,
    ranges: dict[str, tuple[float, float]] | None = None,
    n_jobs: int = 1,
) -> tuple[GbmHyperParams, pd.DataFrame]:
    """Uniform draws within the ranges (log-uniform learning rate); best validation RMSE on u."""
    if n_draws < 1:
        raise ValueError("n_draws must be >= 1")
    draws = draw_hyper_params(n_draws, seed, ranges)
    scores = Parallel(n_jobs=n_jobs)(delayed(_score)(h, train, validation) for h in draws)
    table = pd.DataFrame([{**asdict(h), 'val_rmse': s} for h, s in zip(draws, scores)])
    table.insert(0, 'draw', range(n_draws))
    best = int(np.argmin(scores))
    logger.info(f"GBM random search best draw {best}: validation RMSE {scores[best]:.6f}")
    return draws[best], table


# ============================================================
# Serialization
# ============================================================

def tree_to_list(node: TreeNode) -> list[dict[str, Any]]:
    """Preorder serialization with explicit node tags."""
    out: list[dict[str, Any]] = []
    stack = [node]
    while stack:
        current = stack.pop()
        if isinstance(current, Leaf):
            out.append({'type': 'leaf', 'value': current.value})
        else:
            out.append({
                'type': 'split',
                'feature_index': current.feature_index,
                'threshold': current.threshold,
            })
            stack.append(current.right)
            stack.append(current.left)
    return out


def tree_from_list(nodes: list[dict[str, Any]]) -> TreeNode:
    it = iter(nodes)

    def build() -> TreeNode:
        entry = next(it)
        if entry['type'] == 'leaf':
            return Leaf(float(entry['value']))
        left = build()
        right = build()
        return Split(int(entry['feature_index']), float(entry['threshold']), left, right)

    return build()


def model_to_dict(model: GbmModel) -> dict[str, Any]:
    return {
        'model': 'gbm',
        'init_value': model.init_value,
        'learning_rate': model.learning_rate,
        'n_features': model.n_features,
        'residual_var': model.residual_var,
        'hyper': asdict(model.hyper),
        'seed': model.hyper.seed,
        'trees': [{'scale': scale, 'nodes': tree_to_list(tree)} for tree, scale in model.trees],
    }


def model_from_dict(data: dict[str, Any]) -> GbmModel:
    return GbmModel(
        init_value=float(data['init_value']),
        trees=tuple((tree_from_list(t['nodes']), float(t['scale'])) for t in data['trees']),
        learning_rate=float(data['learning_rate']),
        n_features=int(data['n_features']),
        hyper=GbmHyperParams(**data['hyper']),
        residual_var=float(data['residual_var']),
    )
