# tme_forecast/tme/params.py
"""Parameter containers and their flat-vector layout.

Flat order: for each source ``L_mu, R_mu, b_mu, L_sigma, R_sigma, b_sigma``;
then for each source the gate triple ``L_z, R_z, b_z``.
"""

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from tme_forecast.errors import ShapeMismatch


@dataclass(frozen=True)
class SourceParams:
    L_mu: np.ndarray
    R_mu: np.ndarray
    b_mu: float
    L_sigma: np.ndarray
    R_sigma: np.ndarray
    b_sigma: float

    @property
    def d(self) -> int:
        return int(self.L_mu.size)

    @property
    def h(self) -> int:
        return int(self.R_mu.size)


@dataclass(frozen=True)
class GateParams:
    """One (L_z, R_z, b_z) triple per source."""
    L_z: tuple[np.ndarray, ...]
    R_z: tuple[np.ndarray, ...]
    b_z: np.ndarray


@dataclass(frozen=True)
class TmeParams:
    sources: tuple[SourceParams, ...]
    gate: GateParams

    @property
    def S(self) -> int:
        return len(self.sources)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(s.d for s in self.sources)

    @property
    def h(self) -> int:
        return self.sources[0].h

    def flatten(self) -> np.ndarray:
        parts: list[np.ndarray] = []
        for s in self.sources:
            parts += [
                s.L_mu, s.R_mu, np.atleast_1d(s.b_mu),
                s.L_sigma, s.R_sigma, np.atleast_1d(s.b_sigma),
            ]
        for k in range(self.S):
            parts += [self.gate.L_z[k], self.gate.R_z[k], np.atleast_1d(self.gate.b_z[k])]
        return np.concatenate([np.asarray(p, dtype=float).ravel() for p in parts])

    @classmethod
    def unflatten(cls, vector: np.ndarray, dims: Sequence[int], h: int) -> 'TmeParams':
        vector = np.asarray(vector, dtype=float)
        expected = param_count(dims, h)
        if vector.size != expected:
            raise ShapeMismatch(f"expected {expected} parameters, got {vector.size}")

        pos = 0

        def take(n: int) -> np.ndarray:
            nonlocal pos
            out = vector[pos:pos + n].copy()
            pos += n
            return out

        sources = []
        for d in dims:
            L_mu, R_mu, b_mu = take(d), take(h), take(1)[0]
            L_sigma, R_sigma, b_sigma = take(d), take(h), take(1)[0]
            sources.append(SourceParams(L_mu, R_mu, float(b_mu), L_sigma, R_sigma, float(b_sigma)))
        L_z, R_z, b_z = [], [], []
        for d in dims:
            L_z.append(take(d))
            R_z.append(take(h))
            b_z.append(take(1)[0])
        return cls(tuple(sources), GateParams(tuple(L_z), tuple(R_z), np.asarray(b_z)))

    def with_vector(self, vector: np.ndarray) -> 'TmeParams':
        return TmeParams.unflatten(vector, self.dims, self.h)


def param_count(dims: Sequence[int], h: int) -> int:
    return sum(3 * (d + h + 1) for d in dims)


def bias_mask(dims: Sequence[int], h: int) -> np.ndarray:
    """True at the flat positions of b_mu, b_sigma and b_z."""
    mask = []
    for d in dims:
        block = np.zeros(2 * (d + h + 1), dtype=bool)
        block[d + h] = True
        block[2 * (d + h) + 1] = True
        mask.append(block)
    for d in dims:
        block = np.zeros(d + h + 1, dtype=bool)
        block[-1] = True
        mask.append(block)
    return np.concatenate(mask)


def zeros(dims: Sequence[int], h: int) -> TmeParams:
    return TmeParams.unflatten(np.zeros(param_count(dims, h)), dims, h)


def random_params(
    dims: Sequence[int], h: int, rng: np.random.Generator, scale: float = 0.5,
) -> TmeParams:
    """Gaussian parameters, used for tests and oracles."""
    return TmeParams.unflatten(rng.normal(0.0, scale, param_count(dims, h)), dims, h)


def init_params(
    dims: Sequence[int],
    h: int,
    log_y: np.ndarray,
    rng: np.random.Generator,
    width: float = 0.05,
) -> TmeParams:
    """Weights ~ U(-width, width); each component starts at the marginal of ln y."""
    vector = rng.uniform(-width, width, param_count(dims, h))
    params = TmeParams.unflatten(vector, dims, h)
    b_mu = float(np.mean(log_y))
    b_sigma = float(np.log(max(np.var(log_y), 1e-8)))
    sources = tuple(
        SourceParams(s.L_mu, s.R_mu, b_mu, s.L_sigma, s.R_sigma, b_sigma)
        for s in params.sources
    )
    gate = GateParams(params.gate.L_z, params.gate.R_z, np.zeros(len(dims)))
    return TmeParams(sources, gate)
