"""Calibrated factual and counterfactual explanations for regression models.

The explained quantity is either the CPS median with a percentile interval
(standard regression) or a Venn-Abers calibrated ``P(y <= t)`` with its
probability interval (probabilistic regression). Feature rules come from
perturbing one feature at a time:

* categorical features take every other code;
* numerical features take the 25th/50th/75th percentiles of the calibration
  values on the other side of a regression-tree threshold.

A factual rule's weight is the explained value minus the average over the
perturbed alternatives; a counterfactual rule reports the calibrated value
expected under the alternative condition.
"""

from __future__ import annotations

import enum
import itertools
import math
import threading
from dataclasses import dataclass, replace

import numpy as np

from .conformal import PredictionSummary, cdf_batch, fit_cps, interval_batch
from .dataset import DataTable, FeatureSchema, format_number
from .difficulty import DifficultyEstimator
from .errors import (
    EmptyCalibration,
    NonFiniteThreshold,
    OrderUnsupported,
    SchemaMismatch,
    UninitializedState,
)
from .forest import _Nodes, grow_tree, predict
from .vennabers import ProbabilityTriple, VennAbers

PERTURBATION_PERCENTILES = (25, 50, 75)


class Mode(str, enum.Enum):
    FACTUAL = "factual"
    COUNTERFACTUAL = "counterfactual"
    FACTUAL_PROBABILISTIC = "probabilistic_factual"
    COUNTERFACTUAL_PROBABILISTIC = "probabilistic_counterfactual"

    @property
    def is_factual(self) -> bool:
        return self in (Mode.FACTUAL, Mode.FACTUAL_PROBABILISTIC)

    @property
    def is_probabilistic(self) -> bool:
        return self in (Mode.FACTUAL_PROBABILISTIC, Mode.COUNTERFACTUAL_PROBABILISTIC)


# conditions -----------------------------------------------------------------

@dataclass(frozen=True)
class Equals:
    feature: int
    code: int

    def covers(self, x) -> bool:
        return x[self.feature] == self.code

    def text(self, schema: FeatureSchema) -> str:
        return f"{schema.feature_names[self.feature]} = {schema.label(self.feature, self.code)}"


@dataclass(frozen=True)
class LessEq:
    feature: int
    threshold: float

    def covers(self, x) -> bool:
        return x[self.feature] <= self.threshold

    def text(self, schema: FeatureSchema) -> str:
        return f"{schema.feature_names[self.feature]} <= {format_number(self.threshold)}"


@dataclass(frozen=True)
class Greater:
    feature: int
    threshold: float

    def covers(self, x) -> bool:
        return x[self.feature] > self.threshold

    def text(self, schema: FeatureSchema) -> str:
        return f"{schema.feature_names[self.feature]} > {format_number(self.threshold)}"


@dataclass(frozen=True)
class Conjunction:
    parts: tuple

    @property
    def feature(self) -> tuple[int, ...]:
        return tuple(p.feature for p in self.parts)

    def covers(self, x) -> bool:
        return all(p.covers(x) for p in self.parts)

    def text(self, schema: FeatureSchema) -> str:
        return " & ".join(p.text(schema) for p in self.parts)


# discretizer ----------------------------------------------------------------

@dataclass(frozen=True)
class Discretizer:
    """Sorted split thresholds per feature from univariate regression trees.

    ``depth=1`` gives at most one threshold per feature (binary), ``depth=3``
    up to seven. Categorical features get no thresholds.
    """

    depth: int
    thresholds: tuple[tuple[float, ...], ...]


def fit_discretizer(calibration: DataTable, depth: int, min_leaf: int = 1,
                    backend: str | None = None) -> Discretizer:
    X, y = calibration.rows, calibration.targets
    out = []
    for j in range(X.shape[1]):
        if calibration.schema.is_categorical(j):
            out.append(())
            continue
        column = np.ascontiguousarray(X[:, [j]])
        nodes = _Nodes([], [], [], [], [], [])
        grow_tree(column, y, np.arange(len(y)), nodes, max_depth=depth, min_leaf=min_leaf,
                  max_features=1, rng=np.random.default_rng(0), backend=backend)
        thr = sorted({t for f, t in zip(nodes.feature, nodes.threshold) if f >= 0})
        out.append(tuple(thr))
    return Discretizer(depth, tuple(out))


# perturbations ---------------------------------------------------------------

@dataclass(frozen=True)
class PerturbationGroup:
    condition: object
    values: tuple[float, ...]
    covers_instance: bool


@dataclass(frozen=True)
class FeaturePerturbation:
    feature: int
    groups: tuple[PerturbationGroup, ...]

    @property
    def alternatives(self) -> tuple[PerturbationGroup, ...]:
        return tuple(g for g in self.groups if not g.covers_instance and g.values)

    @property
    def covering(self) -> PerturbationGroup | None:
        return next((g for g in self.groups if g.covers_instance), None)


# explanation types -------------------------------------------------------------

@dataclass(frozen=True)
class FeatureRule:
    """One (possibly conjunctive) rule of an explanation.

    ``weight``, ``weight_low`` and ``weight_high`` are the explained value minus
    the average perturbed estimate, lower bound and upper bound respectively.
    ``prediction_estimate``/``low``/``high`` are those averaged perturbed values.
    ``values`` holds, per feature, the substituted values the rule averages over.
    """

    feature: int | tuple[int, ...]
    condition: object
    weight: float
    weight_low: float
    weight_high: float
    prediction_estimate: float
    low: float
    high: float
    instance_value: float | tuple[float, ...]
    coverage_count: int
    values: tuple[tuple[float, ...], ...]

    @property
    def is_conjunctive(self) -> bool:
        return isinstance(self.condition, Conjunction)

    @property
    def features(self) -> tuple[int, ...]:
        return self.feature if isinstance(self.feature, tuple) else (self.feature,)

    def text(self, schema: FeatureSchema) -> str:
        return self.condition.text(schema)


def _rule_order(rule: FeatureRule):
    return (-abs(rule.weight), rule.features)


@dataclass(frozen=True, eq=False)
class Explanation:
    mode: Mode
    instance: np.ndarray
    prediction: PredictionSummary | ProbabilityTriple
    rules: tuple[FeatureRule, ...]
    schema: FeatureSchema
    threshold: float | None = None
    percentiles: tuple[float, float] | None = None

    @property
    def center(self) -> float:
        pred = self.prediction
        return pred.p if isinstance(pred, ProbabilityTriple) else pred.median

    def rule_for(self, feature: int) -> FeatureRule | None:
        return next((r for r in self.rules if r.feature == feature), None)

    def weights(self) -> dict[int, float]:
        """Single-feature rule weights keyed by feature index."""
        return {r.feature: r.weight for r in self.rules if not r.is_conjunctive}


# state --------------------------------------------------------------------------

class CalibratedExplainerState:
    """Everything fixed at initialization; explanation calls only read it.

    The per-threshold Venn-Abers calibrators of probabilistic mode are memoized
    behind a lock.
    """

    def __init__(self, *, model, calibration, difficulty, cps, cps_p, va_predictions,
                 va_sigmas, va_targets, factual_discretizer, counterfactual_discretizer,
                 seed, tau, backend):
        self.model = model
        self.calibration = calibration
        self.schema = calibration.schema
        self.difficulty = difficulty
        self.cps = cps
        self.cps_p = cps_p
        self.va_predictions = va_predictions
        self.va_sigmas = va_sigmas
        self.va_targets = va_targets
        self.factual_discretizer = factual_discretizer
        self.counterfactual_discretizer = counterfactual_discretizer
        self.seed = seed
        self.tau = tau
        self.backend = backend
        self._va_cache: dict[float, VennAbers] = {}
        self._lock = threading.Lock()
        self._sorted_values = [np.sort(calibration.rows[:, j]) for j in range(self.schema.n_features)]
        self._percentile_cache: dict = {}

    @property
    def n_features(self) -> int:
        return self.schema.n_features

    def clear_cache(self) -> None:
        with self._lock:
            self._va_cache.clear()

    # perturbation values
    def region_values(self, feature: int, threshold: float, above: bool) -> tuple[float, ...]:
        """Percentile values of calibration values ``<= threshold`` (or ``>``)."""
        key = (feature, threshold, above)
        cached = self._percentile_cache.get(key)
        if cached is None:
            values = self._sorted_values[feature]
            cut = np.searchsorted(values, threshold, side="right")
            part = values[cut:] if above else values[:cut]
            cached = tuple(float(v) for v in np.percentile(part, PERTURBATION_PERCENTILES)) if len(part) else ()
            self._percentile_cache[key] = cached
        return cached

    def coverage(self, condition) -> int:
        rows = self.calibration.rows
        if isinstance(condition, Conjunction):
            return int(sum(1 for r in rows if condition.covers(r)))
        j = condition.feature
        values = self._sorted_values[j]
        if isinstance(condition, Equals):
            return int(np.count_nonzero(values == condition.code))
        cut = int(np.searchsorted(values, condition.threshold, side="right"))
        return cut if isinstance(condition, LessEq) else len(values) - cut

    # calibrated values
    def threshold_calibrator(self, t: float) -> VennAbers:
        t = float(t)
        with self._lock:
            va = self._va_cache.get(t)
            if va is None:
                va = self._fit_threshold_calibrator(t)
                self._va_cache[t] = va
            return va

    def _fit_threshold_calibrator(self, t: float) -> VennAbers:
        scores = cdf_batch(self.cps_p, self.va_predictions, t, self.va_sigmas,
                           self._tau_values(len(self.va_predictions), offset=1))
        labels = (self.va_targets <= t).astype(np.float64)
        return VennAbers(scores, labels, backend=self.backend)

    def _tau_values(self, n: int, offset: int = 0):
        if self.tau == "uniform":
            seed = 0 if self.seed is None else self.seed
            return np.random.default_rng([seed, offset]).uniform(size=n)
        return float(self.tau)

    def calibrate(self, rows, percentiles=(5, 95), threshold=None):
        """``(center, low, high)`` arrays for each row.

        Standard mode: CPS median and percentile bounds. Probabilistic mode:
        Venn-Abers ``p``, ``p_low``, ``p_high`` for ``y <= threshold``.
        """
        rows = np.asarray(rows, dtype=np.float64).reshape(-1, self.n_features)
        preds = predict(self.model, rows)
        sigmas = self.difficulty.estimate(rows) if self.difficulty is not None else None
        if threshold is None:
            return interval_batch(self.cps, preds, sigmas, *percentiles)
        scores = cdf_batch(self.cps_p, preds, threshold, sigmas, self._tau_values(len(preds)))
        p_low, p_high, p = self.threshold_calibrator(threshold).predict(scores)
        return p, p_low, p_high


def initialize(model, calibration: DataTable, difficulty: DifficultyEstimator | None = None,
               seed: int | None = None, *, tau: float | str = 0.5, factual_depth: int = 1,
               counterfactual_depth: int = 3, discretizer_min_leaf: int = 1,
               backend: str | None = None) -> CalibratedExplainerState:
    """Calibrate ``model`` on ``calibration`` and prepare discretizers.

    The full calibration set feeds the standard CPS. For probabilistic
    explanations it is halved: the first ``ceil(q/2)`` rows (in table order,
    or in a ``seed``-shuffled order when ``seed`` is given) feed a second CPS
    and the remaining rows calibrate Venn-Abers per threshold.

    ``tau`` is the CPD smoothing constant; ``"uniform"`` draws it from a
    generator seeded by ``seed``.
    """
    if not calibration.has_targets or len(calibration) == 0:
        raise EmptyCalibration("calibration set must be non-empty and have targets")
    q = len(calibration)
    if q < 2:
        raise EmptyCalibration("calibration set needs at least 2 rows")
    if tau != "uniform" and not 0 <= float(tau) <= 1:
        raise ValueError("tau must lie in [0, 1] or be 'uniform'")

    X, y = calibration.rows, calibration.targets
    preds = predict(model, X)
    residuals = y - preds
    sigmas = difficulty.estimate(X) if difficulty is not None else None
    beta = difficulty.beta if difficulty is not None else 0.0
    cps = fit_cps(residuals, sigmas, beta)

    order = np.arange(q) if seed is None else np.random.default_rng(seed).permutation(q)
    first, second = order[: math.ceil(q / 2)], order[math.ceil(q / 2):]
    cps_p = fit_cps(residuals[first], None if sigmas is None else sigmas[first], beta)

    return CalibratedExplainerState(
        model=model, calibration=calibration, difficulty=difficulty, cps=cps, cps_p=cps_p,
        va_predictions=preds[second], va_sigmas=None if sigmas is None else sigmas[second],
        va_targets=y[second],
        factual_discretizer=fit_discretizer(calibration, factual_depth, discretizer_min_leaf, backend),
        counterfactual_discretizer=fit_discretizer(calibration, counterfactual_depth,
                                                   discretizer_min_leaf, backend),
        seed=seed, tau=tau, backend=backend)


def _check_state(state) -> CalibratedExplainerState:
    if not isinstance(state, CalibratedExplainerState):
        raise UninitializedState("explainer state has not been initialized")
    return state


def _instance(state: CalibratedExplainerState, x) -> np.ndarray:
    if isinstance(x, DataTable):
        x = x.rows[0]
    x = np.asarray(x, dtype=np.float64).ravel()
    if len(x) != state.n_features:
        raise SchemaMismatch(f"instance has {len(x)} values, schema has {state.n_features} features")
    return x


def _nearest_threshold(thresholds, value: float) -> float:
    lower = [t for t in thresholds if t < value]
    upper = [t for t in thresholds if t >= value]
    if not lower:
        return upper[0]
    if not upper:
        return lower[-1]
    lo, hi = lower[-1], upper[0]
    return lo if value - lo <= hi - value else hi


def perturbation_sets(state, x, counterfactual: bool = False) -> list[FeaturePerturbation]:
    """Per-feature perturbation groups for instance ``x``.

    Factual numerical features split the calibration values at the threshold
    nearest to ``x_f`` (binary discretizer); counterfactual ones get one group
    per depth-3 threshold, on the side away from ``x_f``. Categorical features
    get one group per code in both cases.
    """
    state = _check_state(state)
    x = _instance(state, x)
    schema = state.schema
    disc = state.counterfactual_discretizer if counterfactual else state.factual_discretizer
    out = []
    for j in range(schema.n_features):
        xj = x[j]
        if schema.is_categorical(j):
            groups = tuple(PerturbationGroup(Equals(j, c), (float(c),), c == xj)
                           for c in range(len(schema.categorical_values[j])))
        elif not disc.thresholds[j]:
            groups = ()
        elif not counterfactual:
            t = _nearest_threshold(disc.thresholds[j], xj)
            groups = (
                PerturbationGroup(LessEq(j, t), state.region_values(j, t, above=False), xj <= t),
                PerturbationGroup(Greater(j, t), state.region_values(j, t, above=True), xj > t),
            )
        else:
            groups = []
            for t in disc.thresholds[j]:
                if xj > t:
                    groups.append(PerturbationGroup(LessEq(j, t), state.region_values(j, t, False), False))
                else:
                    groups.append(PerturbationGroup(Greater(j, t), state.region_values(j, t, True), False))
            groups = tuple(groups)
        out.append(FeaturePerturbation(j, groups))
    return out


def _shift(base: float, values: np.ndarray, parts) -> float:
    """``base - mean(group means of values)``.

    Differences are averaged rather than raw values, so groups whose values
    all equal ``base`` give exactly 0 (a mean of equal floats can round).
    """
    return 0.0 - float(np.mean([np.mean(values[a:b] - base) for a, b in parts]))


def _explain(state, x, mode: Mode, percentiles, threshold) -> Explanation:
    state = _check_state(state)
    x = _instance(state, x)
    if threshold is not None:
        threshold = float(threshold)
        if not math.isfinite(threshold):
            raise NonFiniteThreshold(f"threshold must be finite, got {threshold}")
    counterfactual = not mode.is_factual
    sets = perturbation_sets(state, x, counterfactual=counterfactual)

    # one batch: the instance itself, then every perturbed copy
    rows = [x]
    slots = []  # (feature perturbation, group, start, stop)
    for fp in sets:
        for g in fp.alternatives:
            start = len(rows)
            for v in g.values:
                r = x.copy()
                r[fp.feature] = v
                rows.append(r)
            slots.append((fp, g, start, len(rows)))
    center, low, high = state.calibrate(np.array(rows), percentiles, threshold)
    c0, l0, h0 = float(center[0]), float(low[0]), float(high[0])
    if threshold is None:
        prediction = PredictionSummary(c0, l0, h0, *percentiles)
    else:
        prediction = ProbabilityTriple(l0, h0, c0)

    def summarize(parts):
        # average within each group, then across groups
        c = np.array([center[a:b].mean() for a, b in parts])
        lo = np.array([low[a:b].mean() for a, b in parts])
        hi = np.array([high[a:b].mean() for a, b in parts])
        return c, lo, hi

    rules = []
    if mode.is_factual:
        by_feature: dict[int, list] = {}
        for fp, g, a, b in slots:
            by_feature.setdefault(fp.feature, []).append((g, a, b))
        for fp in sets:
            entries = by_feature.get(fp.feature)
            cover = fp.covering
            if not entries or cover is None:
                continue
            parts = [(a, b) for _, a, b in entries]
            c, lo, hi = summarize(parts)
            rules.append(FeatureRule(
                feature=fp.feature, condition=cover.condition,
                weight=_shift(c0, center, parts), weight_low=_shift(c0, low, parts),
                weight_high=_shift(c0, high, parts),
                prediction_estimate=float(c.mean()), low=float(lo.mean()), high=float(hi.mean()),
                instance_value=float(x[fp.feature]), coverage_count=state.coverage(cover.condition),
                values=(tuple(v for g, _, _ in entries for v in g.values),)))
    else:
        for fp, g, a, b in slots:
            c, lo, hi = summarize([(a, b)])
            rules.append(FeatureRule(
                feature=fp.feature, condition=g.condition,
                weight=_shift(c0, center, [(a, b)]), weight_low=_shift(c0, low, [(a, b)]),
                weight_high=_shift(c0, high, [(a, b)]),
                prediction_estimate=float(c[0]), low=float(lo[0]), high=float(hi[0]),
                instance_value=float(x[fp.feature]), coverage_count=state.coverage(g.condition),
                values=(g.values,)))
    rules.sort(key=_rule_order)
    return Explanation(mode, x, prediction, tuple(rules), state.schema,
                       threshold=threshold,
                       percentiles=None if threshold is not None else tuple(percentiles))


def explain_factual(state, x, percentiles=(5, 95)) -> Explanation:
    """Factual explanation of the CPS median with a percentile interval."""
    return _explain(state, x, Mode.FACTUAL, tuple(percentiles), None)


def explain_counterfactual(state, x, percentiles=(5, 95)) -> Explanation:
    """Counterfactual rules with the calibrated median/interval under each rule."""
    return _explain(state, x, Mode.COUNTERFACTUAL, tuple(percentiles), None)


def explain_probabilistic(state, x, t: float, mode: str = "factual") -> Explanation:
    """Explanation of the calibrated probability ``P(y <= t)``."""
    kind = Mode.FACTUAL_PROBABILISTIC if mode == "factual" else Mode.COUNTERFACTUAL_PROBABILISTIC
    if mode not in ("factual", "counterfactual"):
        raise ValueError(f"mode must be 'factual' or 'counterfactual', got {mode!r}")
    return _explain(state, x, kind, (5, 95), t)


def explain(state, x, mode: str = "factual", percentiles=(5, 95), threshold=None) -> Explanation:
    """Dispatch on ``mode``; a ``threshold`` switches to probabilistic mode."""
    if threshold is not None:
        return explain_probabilistic(state, x, threshold, mode)
    if mode == "factual":
        return explain_factual(state, x, percentiles)
    if mode == "counterfactual":
        return explain_counterfactual(state, x, percentiles)
    raise ValueError(f"mode must be 'factual' or 'counterfactual', got {mode!r}")


def _perturbation_predicate(rule: FeatureRule, factual: bool):
    # factual rules perturb into the region the condition excludes
    return (lambda r: not rule.condition.covers(r)) if factual else rule.condition.covers


def add_conjunctions(explanation: Explanation, state, x=None, max_order: int = 2,
                     top_n: int = 5) -> Explanation:
    """Append conjunctive rules combining the ``top_n`` strongest single rules.

    Pairs (and triples when ``max_order == 3``) over distinct features are
    evaluated on the cross product of the component rules' perturbation values
    and calibrated exactly as single rules are.
    """
    if max_order not in (2, 3):
        raise OrderUnsupported(f"max_order must be 2 or 3, got {max_order}")
    state = _check_state(state)
    x = explanation.instance if x is None else _instance(state, x)
    factual = explanation.mode.is_factual
    singles = [r for r in explanation.rules if not r.is_conjunctive][:top_n]
    existing = {tuple(sorted(r.features)) for r in explanation.rules if r.is_conjunctive}

    combos = []
    for order in range(2, max_order + 1):
        for combo in itertools.combinations(singles, order):
            features = [r.feature for r in combo]
            if len(set(features)) < order:
                continue
            key = tuple(sorted(features))
            if key in existing:
                continue
            existing.add(key)
            combos.append(combo)
    if not combos:
        return explanation

    rows, slots = [], []
    for combo in combos:
        preds = [_perturbation_predicate(r, factual) for r in combo]
        start = len(rows)
        for values in itertools.product(*(r.values[0] for r in combo)):
            row = x.copy()
            for r, v in zip(combo, values):
                row[r.feature] = v
            if all(p(row) for p in preds):
                rows.append(row)
        if len(rows) > start:
            slots.append((combo, start, len(rows)))
    if not rows:
        return explanation
    center, low, high = state.calibrate(np.array(rows), explanation.percentiles or (5, 95),
                                        explanation.threshold)
    c0 = explanation.center
    new_rules = list(explanation.rules)
    for combo, a, b in slots:
        condition = Conjunction(tuple(r.condition for r in combo))
        c, lo, hi = center[a:b], low[a:b], high[a:b]
        new_rules.append(FeatureRule(
            feature=tuple(r.feature for r in combo), condition=condition,
            weight=_shift(c0, center, [(a, b)]), weight_low=_shift(c0, low, [(a, b)]),
            weight_high=_shift(c0, high, [(a, b)]), prediction_estimate=float(c.mean()), low=float(lo.mean()), high=float(hi.mean()),
            instance_value=tuple(float(x[r.feature]) for r in combo),
            coverage_count=state.coverage(condition),
            values=tuple(r.values[0] for r in combo)))
    new_rules.sort(key=_rule_order)
    return replace(explanation, rules=tuple(new_rules))


def explain_batch(state, rows, mode: str = "factual", percentiles=(5, 95), threshold=None):
    X = rows.rows if isinstance(rows, DataTable) else np.asarray(rows, dtype=np.float64)
    return [explain(state, x, mode, percentiles, threshold) for x in np.atleast_2d(X)]
