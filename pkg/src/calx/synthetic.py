"""Synthetic regression tasks for tests, benchmarks and the evaluation CLI."""

from __future__ import annotations

import numpy as np

from .dataset import DataTable, FeatureSchema, Kind


def heteroscedastic(n: int, seed: int = 0, n_features: int = 3):
    """``y = 2 x1 + sin(3 x2) + eps`` with noise scale ``0.05 + x0``.

    All features are uniform on ``[0, 1]``; features beyond the third are
    pure noise. Returns ``(table, noise_scale)``.
    """
    if n_features < 3:
        raise ValueError("need at least 3 features")
    rng = np.random.default_rng(seed)
    X = rng.uniform(0.0, 1.0, size=(n, n_features))
    scale = 0.05 + X[:, 0]
    y = 2 * X[:, 1] + np.sin(3 * X[:, 2]) + rng.normal(0.0, 1.0, n) * scale
    schema = FeatureSchema.numeric([f"x{j}" for j in range(n_features)], target="y")
    return DataTable(X, y, schema), scale


def mixed(n: int, seed: int = 0) -> DataTable:
    """Mixed-type task with one categorical and one irrelevant feature.

    ``y = x0 + 0.5 x1^2 + offset[c]`` plus small noise, where ``c`` has three
    levels and ``noise`` never influences the target.
    """
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(0.0, 4.0, n)
    x1 = rng.uniform(-2.0, 2.0, n)
    c = rng.integers(0, 3, n).astype(np.float64)
    noise = rng.normal(0.0, 1.0, n)
    offset = np.array([0.0, 1.5, -1.0])
    y = x0 + 0.5 * x1 ** 2 + offset[c.astype(int)] + rng.normal(0.0, 0.2, n)
    schema = FeatureSchema(
        ("x0", "x1", "color", "noise"),
        (Kind.NUMERICAL, Kind.NUMERICAL, Kind.CATEGORICAL, Kind.NUMERICAL),
        (None, None, ("red", "green", "blue"), None),
        target="y",
    )
    return DataTable(np.column_stack([x0, x1, c, noise]), y, schema)
