"""Bounded uniform multiplicative noise for labeled-data studies.

Each value x becomes x * (1 + delta) with delta drawn uniformly from
[-level, +level]; level is a fraction (0.01 means 1%). Level 0 reproduces
the input bit for bit. Dict inputs are perturbed field by field in sorted
key order so a seed pins the whole draw.
"""

from __future__ import annotations

from typing import Dict, Union

import numpy as np

Arrays = Union[np.ndarray, Dict[str, np.ndarray]]


def add_noise(values: Arrays, level: float, seed: int) -> Arrays:
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)

    def perturb(x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if level == 0.0:
            return x * 1.0
        return x * (1.0 + rng.uniform(-level, level, size=x.shape))

    if isinstance(values, dict):
        return {k: perturb(values[k]) for k in sorted(values)}
    return perturb(values)
