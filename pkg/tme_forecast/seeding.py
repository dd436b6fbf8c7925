# tme_forecast/seeding.py
"""Deterministic seed splitting from a single root seed."""

import numpy as np


def spawn_seeds(root_seed: int, n: int) -> list[int]:
    """Derive ``n`` independent integer seeds from ``root_seed``."""
    children = np.random.SeedSequence(root_seed).spawn(n)
    return [int(child.generate_state(1)[0]) for child in children]


def component_seed(root_seed: int, component: str) -> int:
    """Seed for a named component (``'tme'``, ``'gbm'``, ...), stable across runs."""
    key = [ord(c) for c in component]
    return int(np.random.SeedSequence([root_seed, *key]).generate_state(1)[0])
