"""Isotonic regression and inductive Venn-Abers predictors."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptyInput, NonBinaryLabel


@dataclass(frozen=True)
class IsotonicFit:
    """Non-decreasing step function through ``(breakpoints, fitted)``.

    Between breakpoints the value of the nearest breakpoint on the left is
    used; below the first breakpoint the first value, above the last the last.
    """

    breakpoints: np.ndarray
    fitted: np.ndarray

    def __call__(self, score):
        pos = np.searchsorted(self.breakpoints, score, side="right") - 1
        return self.fitted[np.clip(pos, 0, len(self.fitted) - 1)]


@dataclass(frozen=True)
class ProbabilityTriple:
    p_low: float
    p_high: float
    p: float


def _pool_ties(scores, labels, weights=None):
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    weights = np.ones_like(scores) if weights is None else np.asarray(weights, dtype=np.float64)
    order = np.argsort(scores, kind="stable")
    s, y, w = scores[order], labels[order], weights[order]
    uniq, start = np.unique(s, return_index=True)
    wsum = np.add.reduceat(w, start)
    ysum = np.add.reduceat(w * y, start)
    return uniq, ysum, wsum


def pava(points, weights=None, backend: str | None = None) -> IsotonicFit:
    """Least-squares non-decreasing fit of labels against scores.

    ``points`` is a sequence of ``(score, label)`` pairs or an ``(n, 2)``
    array. Points sharing a score are pooled (weighted mean label) first.
    """
    arr = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if len(arr) == 0:
        raise EmptyInput("pava needs at least one point")
    uniq, ysum, wsum = _pool_ties(arr[:, 0], arr[:, 1], weights)
    fitted = kernels.get(backend).pava(ysum / wsum, wsum)
    return IsotonicFit(uniq, fitted)


class VennAbers:
    """Inductive Venn-Abers calibrator over fixed calibration ``(score, label)``.

    Calibration points are sorted and tie-pooled once; each query inserts the
    test score with label 0 and with label 1 and runs PAVA on the result.
    """

    def __init__(self, scores, labels, backend: str | None = None):
        scores = np.asarray(scores, dtype=np.float64).ravel()
        labels = np.asarray(labels, dtype=np.float64).ravel()
        if len(scores) == 0:
            raise EmptyInput("Venn-Abers needs calibration points")
        if len(scores) != len(labels):
            raise ValueError("scores and labels differ in length")
        if not np.all((labels == 0) | (labels == 1)):
            raise NonBinaryLabel("Venn-Abers labels must be 0 or 1")
        self._uniq, self._ysum, self._wsum = _pool_ties(scores, labels)
        self._pava = kernels.get(backend).pava

    def _fit_at(self, s: float, label: float) -> float:
        pos = int(np.searchsorted(self._uniq, s))
        if pos < len(self._uniq) and self._uniq[pos] == s:
            ysum = self._ysum.copy()
            wsum = self._wsum.copy()
            ysum[pos] += label
            wsum[pos] += 1.0
        else:
            ysum = np.insert(self._ysum, pos, label)
            wsum = np.insert(self._wsum, pos, 1.0)
        return float(self._pava(ysum / wsum, wsum)[pos])

    def predict_one(self, s: float) -> ProbabilityTriple:
        p_low = self._fit_at(s, 0.0)
        p_high = self._fit_at(s, 1.0)
        return ProbabilityTriple(p_low, p_high, regularized(p_low, p_high))

    def predict(self, scores):
        """Arrays ``(p_low, p_high, p)`` for many test scores."""
        scores = np.asarray(scores, dtype=np.float64).ravel()
        p_low = np.array([self._fit_at(s, 0.0) for s in scores])
        p_high = np.array([self._fit_at(s, 1.0) for s in scores])
        return p_low, p_high, regularized(p_low, p_high)


def regularized(p_low, p_high):
    """Single probability from a Venn-Abers interval: ``p_high / (1 - p_low + p_high)``.

    The result is clipped into ``[p_low, p_high]``, which it lies in exactly;
    the clip only removes last-bit rounding.
    """
    p = p_high / (1 - p_low + p_high)
    return np.clip(p, p_low, p_high) if np.ndim(p) else float(min(max(p, p_low), p_high))


def venn_abers(calibration, test_score: float, backend: str | None = None) -> ProbabilityTriple:
    """One-shot Venn-Abers prediction from ``(score, label)`` calibration pairs."""
    arr = np.asarray(calibration, dtype=np.float64).reshape(-1, 2)
    return VennAbers(arr[:, 0], arr[:, 1], backend).predict_one(test_score)
