"""Per-instance difficulty estimates used to normalize nonconformity scores.

Four estimators are available:

``distance``
    mean Euclidean distance to the k nearest reference rows
``std``
    population standard deviation of the k nearest reference targets
``abserror``
    mean absolute residual of the k nearest reference rows
``variance``
    variance of the per-member predictions of an ensemble model

Neighbour search is brute force. Numerical features are min-max scaled (when
``scale`` is set) and categorical features add a 0/1 mismatch term.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .dataset import DataTable, FeatureSchema
from .errors import KTooLarge, PayloadMismatch
from .forest import as_matrix, member_variance

DEFAULT_K = 25
DEFAULT_BETA = 0.01


class Mode(str, enum.Enum):
    KNN_DISTANCE = "distance"
    KNN_TARGET_STD = "std"
    KNN_ABS_ERROR = "abserror"
    ENSEMBLE_VARIANCE = "variance"


@dataclass(frozen=True, eq=False)
class DifficultyEstimator:
    mode: Mode
    k: int
    reference: np.ndarray | None
    payload: np.ndarray | None
    model: object | None
    offset: np.ndarray | None
    span: np.ndarray | None
    categorical: np.ndarray | None
    beta: float = DEFAULT_BETA

    @property
    def uses_neighbours(self) -> bool:
        return self.mode is not Mode.ENSEMBLE_VARIANCE

    def _transform(self, X: np.ndarray) -> np.ndarray:
        if self.offset is None:
            return X
        return (X - self.offset) / self.span

    def neighbours(self, rows) -> tuple[np.ndarray, np.ndarray]:
        """``(indices, distances)`` of the k nearest reference rows per query.

        Ties at equal distance go to the lowest reference index.
        """
        Z = self._transform(as_matrix(rows, self.reference.shape[1]))
        ref = self.reference
        cat = self.categorical
        has_cat = cat is not None and cat.any()
        chunk = max(1, 4_000_000 // max(1, ref.size))
        idx_parts, dist_parts = [], []
        for start in range(0, len(Z), chunk):
            diff = Z[start:start + chunk, None, :] - ref[None, :, :]
            if has_cat:
                diff[:, :, cat] = diff[:, :, cat] != 0
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            order = np.argsort(dist, axis=1, kind="stable")[:, :self.k]
            idx_parts.append(order)
            dist_parts.append(np.take_along_axis(dist, order, axis=1))
        if not idx_parts:
            return np.empty((0, self.k), dtype=np.int64), np.empty((0, self.k))
        return np.concatenate(idx_parts), np.concatenate(dist_parts)

    def estimate(self, rows) -> np.ndarray:
        """Difficulty ``sigma`` (without ``beta``) for each row."""
        if self.mode is Mode.ENSEMBLE_VARIANCE:
            return member_variance(np.asarray(self.model.per_member_predictions(rows), dtype=np.float64))
        idx, dist = self.neighbours(rows)
        if self.mode is Mode.KNN_DISTANCE:
            return dist.mean(axis=1)
        values = self.payload[idx]
        if self.mode is Mode.KNN_TARGET_STD:
            return values.std(axis=1)
        return np.abs(values).mean(axis=1)


def fit_difficulty(mode: Mode | str, reference: DataTable | None = None, *, targets=None,
                   residuals=None, model=None, k: int | None = None, scale: bool = True,
                   beta: float = DEFAULT_BETA) -> DifficultyEstimator:
    """Build a difficulty estimator.

    Parameters
    ----------
    mode : Mode or str
        One of ``distance``, ``std``, ``abserror`` or ``variance``.
    reference : DataTable
        Reference rows for the neighbour-based modes (typically the proper
        training set).
    targets, residuals, model
        Mode payload: ``std`` needs targets (taken from ``reference`` when
        omitted), ``abserror`` needs residuals (for a forest, out-of-bag
        residuals), ``variance`` needs a model with ``per_member_predictions``.
    k : int, optional
        Number of neighbours; defaults to 25 capped at the reference size.
    scale : bool
        Min-max scale numerical features using the reference rows.
    beta : float
        Stabiliser added to sigma when the estimator normalizes a CPS.
    """
    mode = Mode(mode)
    if beta < 0:
        raise ValueError("beta must be non-negative")
    if mode is Mode.ENSEMBLE_VARIANCE:
        if model is None or not hasattr(model, "per_member_predictions"):
            raise PayloadMismatch("variance mode needs an ensemble model with per-member predictions")
        return DifficultyEstimator(mode, 0, None, None, model, None, None, None, beta)

    if reference is None or len(reference) == 0:
        raise PayloadMismatch(f"{mode.value} mode needs reference rows")
    X = np.ascontiguousarray(reference.rows, dtype=np.float64)
    n = len(X)
    if k is None:
        k = min(DEFAULT_K, n)
    if k < 1:
        raise ValueError("k must be positive")
    if k > n:
        raise KTooLarge(f"k={k} exceeds the {n} reference rows")

    payload = None
    if mode is Mode.KNN_TARGET_STD:
        payload = reference.targets if targets is None else targets
        if payload is None:
            raise PayloadMismatch("std mode needs reference targets")
    elif mode is Mode.KNN_ABS_ERROR:
        if residuals is None:
            raise PayloadMismatch("abserror mode needs residuals")
        payload = residuals
    if payload is not None:
        payload = np.asarray(payload, dtype=np.float64).ravel()
        if len(payload) != n:
            raise PayloadMismatch(f"{len(payload)} payload values for {n} reference rows")

    schema: FeatureSchema = reference.schema
    categorical = np.zeros(X.shape[1], dtype=bool)
    categorical[list(schema.categorical)] = True
    offset = span = None
    if scale:
        offset = np.where(categorical, 0.0, X.min(axis=0))
        span = X.max(axis=0) - X.min(axis=0)
        span = np.where(categorical | (span == 0), 1.0, span)
        X = (X - offset) / span
    return DifficultyEstimator(mode, k, X, payload, None, offset, span, categorical, beta)


def estimate(estimator: DifficultyEstimator, rows) -> np.ndarray:
    return estimator.estimate(rows)
