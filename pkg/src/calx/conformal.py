"""Inductive conformal predictive systems.

Calibration residuals ``y - h(x)`` (optionally divided by ``sigma + beta``)
become sorted nonconformity scores. For a test object with prediction ``h(x)``
the conformal predictive distribution (CPD) is the step function built on
``C_(i) = h(x) + scale * alpha_i`` with ``scale = sigma + beta`` when
normalized and ``1`` otherwise.

The batch helpers (``*_batch``) evaluate many test objects at once and are
what the explainer uses; they perform exactly the same arithmetic as the
single-object path so both agree bit for bit.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import EmptyCalibration, InvalidPercentiles, MissingSigma


@dataclass(frozen=True)
class ResidualSet:
    residuals: np.ndarray
    sigmas: np.ndarray | None = None
    beta: float = 0.01

    def __post_init__(self):
        r = np.asarray(self.residuals, dtype=np.float64).ravel()
        object.__setattr__(self, "residuals", r)
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.sigmas is not None:
            s = np.asarray(self.sigmas, dtype=np.float64).ravel()
            if len(s) != len(r):
                raise EmptyCalibration(f"{len(s)} sigmas for {len(r)} residuals")
            if np.any(s + self.beta <= 0):
                raise ValueError("every sigma + beta must be positive")
            object.__setattr__(self, "sigmas", s)


@dataclass(frozen=True)
class Cps:
    """Sorted nonconformity scores of a fitted conformal predictive system."""

    alphas: np.ndarray
    normalized: bool = False
    beta: float = 0.0

    @property
    def q(self) -> int:
        return len(self.alphas)

    def scale(self, sigma) -> np.ndarray | float:
        """Multiplier applied to the scores for a test object."""
        if not self.normalized:
            return 1.0
        if sigma is None:
            raise MissingSigma("normalized CPS needs a difficulty estimate for every query")
        return np.asarray(sigma, dtype=np.float64) + self.beta


@dataclass(frozen=True)
class Cpd:
    c_values: np.ndarray
    tau: float = 0.5

    @property
    def q(self) -> int:
        return len(self.c_values)

    def __call__(self, y: float) -> float:
        return cdf_at(self, y)


@dataclass(frozen=True)
class PredictionSummary:
    median: float
    low: float
    high: float
    low_percentile: float
    high_percentile: float

    def __post_init__(self):
        if not self.low <= self.median <= self.high:
            raise ValueError(f"inconsistent summary: {self.low} <= {self.median} <= {self.high}")


def nonconformity_scores(residuals: ResidualSet) -> Cps:
    """Sort (optionally normalized) residuals ascending."""
    r = residuals.residuals
    if len(r) == 0:
        raise EmptyCalibration("no calibration residuals")
    if residuals.sigmas is None:
        alphas = np.sort(r)
        normalized = False
    else:
        alphas = np.sort(r / (residuals.sigmas + residuals.beta))
        normalized = True
    alphas.setflags(write=False)
    return Cps(alphas, normalized, residuals.beta)


def fit_cps(residuals, sigmas=None, beta: float = 0.01) -> Cps:
    return nonconformity_scores(ResidualSet(residuals, sigmas, beta))


def build_cpd(cps: Cps, prediction: float, sigma: float | None = None, tau: float = 0.5) -> Cpd:
    if cps.normalized:
        if sigma is None:
            raise MissingSigma("normalized CPS needs sigma")
        c = prediction + cps.scale(sigma) * cps.alphas
    else:
        c = prediction + cps.alphas
    c = np.asarray(c, dtype=np.float64)
    c.setflags(write=False)
    return Cpd(c, tau)


def _cdf_counts(below, through, q, tau):
    # below = #{C < y}, through = #{C <= y}; with no tie this is (i + tau)/(q+1),
    # with ties i' = below + 1, i'' = through gives (i'-1 + (i''-i'+2) tau)/(q+1)
    return (below + (through - below + 1) * tau) / (q + 1)


def cdf_at(cpd: Cpd, y: float) -> float:
    """Evaluate the CPD step function at ``y``."""
    c = cpd.c_values
    below = int(np.searchsorted(c, y, side="left"))
    through = int(np.searchsorted(c, y, side="right"))
    return float(_cdf_counts(below, through, len(c), cpd.tau))


def threshold_probability(cpd: Cpd, t: float) -> float:
    """Probability that the true target is at most ``t``."""
    return cdf_at(cpd, t)


def _check_percentiles(low: float, high: float) -> None:
    if math.isnan(low) or math.isnan(high):
        raise InvalidPercentiles("percentiles must not be NaN")
    if low >= high:
        raise InvalidPercentiles(f"low percentile {low} must be below high percentile {high}")
    if math.isfinite(low) and not 0 < low < 100:
        raise InvalidPercentiles(f"low percentile {low} outside (0, 100)")
    if math.isfinite(high) and not 0 < high < 100:
        raise InvalidPercentiles(f"high percentile {high} outside (0, 100)")
    if low == math.inf or high == -math.inf:
        raise InvalidPercentiles("low may only be -inf and high only +inf")


def _percentile_index(p: float, q: int, upper: bool) -> int:
    """1-based order-statistic index for percentile ``p``; 0 or q+1 mean unbounded."""
    if p == -math.inf:
        return 0
    if p == math.inf:
        return q + 1
    x = p * (q + 1) / 100
    # guard against representation error in p * (q + 1) / 100
    return int(math.ceil(x - 1e-9)) if upper else int(math.floor(x + 1e-9))


def percentile_indices(low: float, high: float, q: int) -> tuple[int, int]:
    _check_percentiles(low, high)
    lo = _percentile_index(low, q, upper=False)
    hi = _percentile_index(high, q, upper=True)
    if (lo == 0 and math.isfinite(low)) or (hi > q and math.isfinite(high)):
        warnings.warn(
            f"calibration set of size {q} too small for percentiles ({low}, {high}); "
            "bound is unbounded", stacklevel=3)
    return lo, min(hi, q + 1)


def median_indices(q: int) -> tuple[int, int]:
    half = 0.5 * (q + 1)
    return int(math.floor(half)), int(math.ceil(half))


def interval(cpd: Cpd, low_percentile: float = 5, high_percentile: float = 95) -> PredictionSummary:
    """Median and the ``[low, high]`` percentile bounds of a CPD.

    ``-inf``/``inf`` percentiles give one-sided intervals.
    """
    c = cpd.c_values
    q = len(c)
    lo, hi = percentile_indices(low_percentile, high_percentile, q)
    m_lo, m_hi = median_indices(q)
    median = (c[m_hi - 1] + c[m_lo - 1]) / 2
    low = -math.inf if lo == 0 else float(c[lo - 1])
    high = math.inf if hi > q else float(c[hi - 1])
    return PredictionSummary(float(median), low, high, low_percentile, high_percentile)


# batch evaluation -----------------------------------------------------------

def c_matrix(cps: Cps, predictions, sigmas=None) -> np.ndarray:
    """``C`` values for many test objects, one row per object."""
    predictions = np.asarray(predictions, dtype=np.float64)
    if cps.normalized:
        return predictions[:, None] + cps.scale(sigmas)[:, None] * cps.alphas[None, :]
    return predictions[:, None] + cps.alphas[None, :]


def interval_batch(cps: Cps, predictions, sigmas=None, low_percentile: float = 5,
                   high_percentile: float = 95):
    """Vectorised :func:`interval`; returns ``(median, low, high)`` arrays."""
    q = cps.q
    lo, hi = percentile_indices(low_percentile, high_percentile, q)
    m_lo, m_hi = median_indices(q)
    predictions = np.asarray(predictions, dtype=np.float64)
    scale = cps.scale(sigmas)

    def column(i):
        if cps.normalized:
            return predictions + scale * cps.alphas[i - 1]
        return predictions + cps.alphas[i - 1]

    median = (column(m_hi) + column(m_lo)) / 2
    n = len(predictions)
    low = np.full(n, -math.inf) if lo == 0 else column(lo)
    high = np.full(n, math.inf) if hi > q else column(hi)
    return median, low, high


def cdf_batch(cps: Cps, predictions, threshold: float, sigmas=None, tau=0.5) -> np.ndarray:
    """``P(Y <= threshold)`` for many test objects. ``tau`` may be an array."""
    c = c_matrix(cps, predictions, sigmas)
    below = np.count_nonzero(c < threshold, axis=1)
    through = np.count_nonzero(c <= threshold, axis=1)
    return _cdf_counts(below, through, cps.q, np.asarray(tau, dtype=np.float64))
