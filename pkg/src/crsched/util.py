"""Shared helpers: seeded RNG streams, config hashing, small numerics."""

from __future__ import annotations

import hashlib
import json

import numpy as np


def make_rng(seed, *stream: int) -> np.random.Generator:
    """Counter-based generator addressed by (seed, substream indices).

    Extending the seed sequence rather than drawing from a parent generator
    keeps every substream reproducible regardless of evaluation order.
    """
    if isinstance(seed, (tuple, list)):
        entropy = [int(s) for s in seed]
    else:
        entropy = [int(seed)]
    entropy.extend(int(s) for s in stream)
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def trapezoid_mass(values: np.ndarray, grid: np.ndarray) -> float:
    """Composite trapezoid integral of tabulated values over a grid."""
    values = np.asarray(values, dtype=float)
    grid = np.asarray(grid, dtype=float)
    return float(np.sum(0.5 * (values[1:] + values[:-1]) * np.diff(grid)))


def config_hash(payload) -> str:
    """Stable short hash of a JSON-serializable configuration."""
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]
