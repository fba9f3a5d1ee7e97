"""Bagged variance-reduction regression trees with out-of-bag predictions.

Trees are stored packed: all nodes of all trees share flat arrays and child
indices are absolute, so a whole forest is evaluated by one kernel call.
"""

from __future__ import annotations

import base64
import json
import math
import os
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np

from . import kernels
from .dataset import DataTable
from .errors import EmptyTraining, SchemaMismatch

FORMAT_VERSION = 1


@runtime_checkable
class RegressorContract(Protocol):
    """Anything with a deterministic ``predict(rows) -> (n,)`` can be explained.

    ``per_member_predictions`` and ``oob_predictions`` are optional and only
    needed by the ensemble-variance and absolute-error difficulty estimators.
    """

    def predict(self, rows) -> np.ndarray: ...


def as_matrix(rows, n_features: int | None = None) -> np.ndarray:
    """Feature matrix from a DataTable, 2-D array or single row."""
    X = rows.rows if isinstance(rows, DataTable) else np.asarray(rows, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(1, -1)
    if n_features is not None and X.shape[1] != n_features:
        raise SchemaMismatch(f"expected {n_features} feature columns, got {X.shape[1]}")
    return np.ascontiguousarray(X, dtype=np.float64)


@dataclass
class _Nodes:
    feature: list
    threshold: list
    left: list
    right: list
    value: list
    count: list

    def add(self, value: float, count: int) -> int:
        self.feature.append(-1)
        self.threshold.append(0.0)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(value)
        self.count.append(count)
        return len(self.value) - 1


def grow_tree(X, y, idx, nodes: _Nodes, *, max_depth, min_leaf, max_features, rng, backend=None):
    """Grow one tree on rows ``idx`` (duplicates allowed) into ``nodes``.

    Depth-first, left child first. Each split attempt draws one random feature
    permutation from ``rng``; the split maximising SSE reduction wins, ties
    going to the lowest feature index and then the lowest threshold.
    Returns the root index.
    """
    kern = kernels.get(backend)
    d = X.shape[1]
    max_depth = math.inf if max_depth is None else max_depth

    root = None
    # (rows, depth, parent, is_left); right pushed before left -> preorder
    stack = [(np.asarray(idx, dtype=np.int64), 0, -1, False)]
    while stack:
        node_idx, depth, parent, is_left = stack.pop()
        yv = y[node_idx]
        total = np.cumsum(yv)[-1]
        node = nodes.add(float(total / len(node_idx)), len(node_idx))
        if parent < 0:
            root = node
        elif is_left:
            nodes.left[parent] = node
        else:
            nodes.right[parent] = node
        if depth >= max_depth or len(node_idx) < 2 * min_leaf or yv.min() == yv.max():
            continue
        order = rng.permutation(d)
        f, thr, score = kern.best_split(X, y, node_idx, order, max_features, min_leaf)
        if f < 0:
            continue
        if not score > total * total / len(node_idx):
            continue
        go_left = X[node_idx, f] <= thr
        nodes.feature[node] = int(f)
        nodes.threshold[node] = float(thr)
        stack.append((node_idx[~go_left], depth + 1, node, False))
        stack.append((node_idx[go_left], depth + 1, node, True))
    return root


class ForestModel:
    """A fitted bagged regression forest.

    Attributes
    ----------
    roots : ndarray of shape (n_trees,)
        Root node index of each tree in the packed node arrays.
    bootstrap_masks : ndarray of bool, shape (n_trees, n_train)
        ``True`` where the training row was drawn into the tree's bootstrap.
    oob_prediction : ndarray of shape (n_train,)
        Mean over trees that did not see the row; rows seen by every tree fall
        back to the full-ensemble prediction and are flagged in ``oob_missing``.
    """

    def __init__(self, *, roots, feature, threshold, left, right, value, count,
                 n_features, max_depth, min_leaf, seed, bootstrap_masks,
                 oob_prediction, oob_missing, backend=None):
        self.roots = np.asarray(roots, dtype=np.int64)
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=np.float64)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=np.float64)
        self.count = np.asarray(count, dtype=np.int64)
        self.n_features = int(n_features)
        self.max_depth = max_depth
        self.min_leaf = int(min_leaf)
        self.seed = seed
        self.bootstrap_masks = np.asarray(bootstrap_masks, dtype=bool)
        self.oob_prediction = np.asarray(oob_prediction, dtype=np.float64)
        self.oob_missing = np.asarray(oob_missing, dtype=bool)
        self.backend = backend

    @property
    def n_trees(self) -> int:
        return len(self.roots)

    @property
    def n_nodes(self) -> int:
        return len(self.value)

    def __repr__(self):
        return (f"ForestModel(n_trees={self.n_trees}, max_depth={self.max_depth}, "
                f"min_leaf={self.min_leaf}, seed={self.seed})")

    def per_member_predictions(self, rows) -> np.ndarray:
        X = as_matrix(rows, self.n_features)
        return kernels.get(self.backend).forest_apply(
            X, self.roots, self.feature, self.threshold, self.left, self.right, self.value)

    def predict(self, rows) -> np.ndarray:
        return member_mean(self.per_member_predictions(rows))

    def oob_predictions(self) -> np.ndarray:
        return self.oob_prediction

    def tree_nodes(self, t: int) -> np.ndarray:
        """Absolute node indices belonging to tree ``t``."""
        start = self.roots[t]
        stop = self.roots[t + 1] if t + 1 < self.n_trees else self.n_nodes
        return np.arange(start, stop)

    def to_dict(self) -> dict:
        masks = np.packbits(self.bootstrap_masks, axis=1)
        return {
            "format": "calx-forest",
            "version": FORMAT_VERSION,
            "n_features": self.n_features,
            "n_train": int(self.bootstrap_masks.shape[1]),
            "max_depth": self.max_depth,
            "min_leaf": self.min_leaf,
            "seed": self.seed,
            "roots": self.roots.tolist(),
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "count": self.count.tolist(),
            "bootstrap_masks": [base64.b64encode(row.tobytes()).decode("ascii") for row in masks],
            "oob_prediction": self.oob_prediction.tolist(),
            "oob_missing": np.flatnonzero(self.oob_missing).tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ForestModel":
        if doc.get("format") != "calx-forest":
            raise ValueError("not a calx forest document")
        if doc.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported forest format version {doc.get('version')!r}")
        n_train = doc["n_train"]
        packed = [np.frombuffer(base64.b64decode(s), dtype=np.uint8) for s in doc["bootstrap_masks"]]
        masks = np.array([np.unpackbits(p)[:n_train] for p in packed], dtype=bool).reshape(-1, n_train)
        missing = np.zeros(n_train, dtype=bool)
        missing[doc["oob_missing"]] = True
        return cls(roots=doc["roots"], feature=doc["feature"], threshold=doc["threshold"],
                   left=doc["left"], right=doc["right"], value=doc["value"], count=doc["count"],
                   n_features=doc["n_features"], max_depth=doc["max_depth"],
                   min_leaf=doc["min_leaf"], seed=doc["seed"], bootstrap_masks=masks,
                   oob_prediction=doc["oob_prediction"], oob_missing=missing)

    def save(self, path: str | os.PathLike) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ForestModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def member_mean(members: np.ndarray) -> np.ndarray:
    """Mean over axis 0, summed tree by tree.

    ``ndarray.mean`` switches to pairwise summation for single-column input,
    which would make a row's prediction depend on the batch it arrives in.
    """
    total = members[0].copy()
    for row in members[1:]:
        total += row
    return total / len(members)


def member_variance(members: np.ndarray) -> np.ndarray:
    """Population variance over axis 0 with the same batch-independent summation."""
    centred = members - member_mean(members)
    return member_mean(centred * centred)


def fit_forest(train: DataTable, n_trees: int = 100, max_depth: int | None = None,
               min_leaf: int = 1, seed: int = 0, max_features: int | None = None,
               backend: str | None = None) -> ForestModel:
    """Fit ``n_trees`` bootstrap regression trees.

    Each split considers ``ceil(d / 3)`` randomly chosen non-constant features
    unless ``max_features`` is given. A constant target simply yields constant
    leaves. ``backend`` picks the kernel implementation ("compiled"/"python").
    """
    if len(train) == 0:
        raise EmptyTraining("cannot fit a forest on 0 rows")
    if not train.has_targets:
        raise EmptyTraining("training table has no targets")
    if n_trees < 1 or min_leaf < 1:
        raise ValueError("n_trees and min_leaf must be positive")
    X = np.ascontiguousarray(train.rows)
    y = np.ascontiguousarray(train.targets)
    n, d = X.shape
    k = max_features if max_features is not None else max(1, math.ceil(d / 3))

    nodes = _Nodes([], [], [], [], [], [])
    roots = []
    masks = np.zeros((n_trees, n), dtype=bool)
    for t, child in enumerate(np.random.SeedSequence(seed).spawn(n_trees)):
        rng = np.random.default_rng(child)
        idx = np.sort(rng.integers(0, n, n))
        masks[t, idx] = True
        roots.append(grow_tree(X, y, idx, nodes, max_depth=max_depth, min_leaf=min_leaf,
                               max_features=k, rng=rng, backend=backend))

    model = ForestModel(roots=roots, feature=nodes.feature, threshold=nodes.threshold,
                        left=nodes.left, right=nodes.right, value=nodes.value,
                        count=nodes.count, n_features=d, max_depth=max_depth,
                        min_leaf=min_leaf, seed=seed, bootstrap_masks=masks,
                        oob_prediction=np.zeros(n), oob_missing=np.zeros(n, dtype=bool),
                        backend=backend)
    members = model.per_member_predictions(X)
    out_of_bag = ~masks
    counts = out_of_bag.sum(axis=0)
    sums = np.where(out_of_bag, members, 0.0).sum(axis=0)
    missing = counts == 0
    oob = np.where(missing, member_mean(members), sums / np.maximum(counts, 1))
    model.oob_prediction = oob
    model.oob_missing = missing
    return model


def predict(model: RegressorContract, rows) -> np.ndarray:
    return np.asarray(model.predict(rows), dtype=np.float64)


def per_member_predictions(model, rows) -> np.ndarray:
    if not hasattr(model, "per_member_predictions"):
        raise TypeError(f"{type(model).__name__} does not expose per-member predictions")
    return np.asarray(model.per_member_predictions(rows), dtype=np.float64)


class PredictionTable:
    """Adapter turning precomputed predictions into a :class:`RegressorContract`.

    Predictions are looked up by exact feature-row match. Rows without a stored
    prediction are recorded in ``missing`` and predicted as NaN, so a caller can
    export them for external scoring and retry.
    """

    def __init__(self, rows, predictions):
        X = as_matrix(rows)
        self.n_features = X.shape[1]
        self._table = {tuple(r): float(p) for r, p in zip(X.tolist(), np.asarray(predictions, dtype=float))}
        self.missing: dict[tuple, None] = {}

    def __len__(self):
        return len(self._table)

    def predict(self, rows) -> np.ndarray:
        X = as_matrix(rows, self.n_features)
        out = np.empty(len(X))
        for i, r in enumerate(X.tolist()):
            key = tuple(r)
            value = self._table.get(key)
            if value is None:
                self.missing[key] = None
                value = math.nan
            out[i] = value
        return out
