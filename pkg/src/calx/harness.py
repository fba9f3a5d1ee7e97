"""Evaluation protocol: stability, robustness and run time of explanations.

Mode codes follow the usual abbreviations:

========  ===========================================
``fcer``  factual explanation, standard regression
``ccer``  counterfactual, standard regression
``pfcer`` factual, probabilistic regression
``pccer`` counterfactual, probabilistic regression
========  ===========================================

Stability and robustness both report, per mode, the mean over test instances
of the population variance of the top feature's weight. The top feature of an
instance is the most frequent rank-1 feature over the repetitions (ties to the
lowest index) and its weight in a run is the weight of its highest-ranked rule.
"""

from __future__ import annotations

import csv
import io
import json
import time
from collections import Counter
from dataclasses import asdict, dataclass, field

import numpy as np

from . import explainer
from .dataset import DataTable
from .difficulty import fit_difficulty
from .errors import InsufficientRows
from .forest import fit_forest, predict

MODES = ("fcer", "ccer", "pfcer", "pccer")
NORMALIZATIONS = ("none", "distance", "std", "abserror", "variance")
METRICS = ("stability", "robustness", "runtime")


@dataclass(frozen=True)
class EvalConfig:
    """Protocol settings.

    ``seed_policy`` is ``"iteration"`` (state seed = repetition counter) or
    ``"fixed"`` (state seed 42 throughout). ``train_size`` caps the proper
    training set; ``None`` uses every row not taken by calibration and test.
    """

    repetitions: int = 100
    n_test: int = 10
    calibration_size: int = 500
    threshold: float = 0.5
    modes: tuple[str, ...] = MODES
    seed_policy: str = "iteration"
    percentiles: tuple[float, float] = (5, 95)
    train_size: int | None = None
    n_trees: int = 100
    min_leaf: int = 1
    seed: int = 42
    rounds: int = 3

    def __post_init__(self):
        if self.repetitions < 2:
            raise ValueError("repetitions must be at least 2")
        unknown = set(self.modes) - set(MODES)
        if unknown:
            raise ValueError(f"unknown modes: {sorted(unknown)}")
        if self.seed_policy not in ("iteration", "fixed"):
            raise ValueError("seed_policy must be 'iteration' or 'fixed'")
        if self.n_test < 0 or self.rounds < 1:
            raise ValueError("n_test must be non-negative and rounds positive")


@dataclass
class ModeResult:
    mode: str
    normalization: str
    value: float
    top_features: list[int] = field(default_factory=list)
    prediction_variance: float | None = None


@dataclass
class EvalReport:
    """Results of one metric over modes and normalizations.

    ``value`` is a variance for stability/robustness and seconds per instance
    for run time.
    """

    metric: str
    results: list[ModeResult]
    empty: bool = False
    config: dict = field(default_factory=dict)

    def value(self, mode: str, normalization: str = "none") -> float:
        for r in self.results:
            if r.mode == mode and r.normalization == normalization:
                return r.value
        raise KeyError((mode, normalization))

    @property
    def prediction_variance(self) -> float | None:
        return next((r.prediction_variance for r in self.results
                     if r.prediction_variance is not None), None)

    def to_dict(self) -> dict:
        return {"metric": self.metric, "empty": self.empty, "config": self.config,
                "results": [asdict(r) for r in self.results]}

    @classmethod
    def from_dict(cls, doc: dict) -> "EvalReport":
        return cls(doc["metric"], [ModeResult(**r) for r in doc["results"]],
                   doc.get("empty", False), doc.get("config", {}))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    def to_csv(self) -> str:
        """Modes as rows, normalizations as columns."""
        norms = list(dict.fromkeys(r.normalization for r in self.results))
        modes = list(dict.fromkeys(r.mode for r in self.results))
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(["mode", *norms])
        for mode in modes:
            cells = []
            for norm in norms:
                match = [r.value for r in self.results if r.mode == mode and r.normalization == norm]
                cells.append(f"{match[0]:.6g}" if match else "")
            writer.writerow([mode.upper(), *cells])
        return out.getvalue()


def summary_csv(reports: list[EvalReport], normalization: str = "none") -> str:
    """Modes as rows and metrics as columns for one normalization."""
    modes = list(dict.fromkeys(r.mode for rep in reports for r in rep.results))
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["mode", *(rep.metric for rep in reports)])
    for mode in modes:
        cells = []
        for rep in reports:
            try:
                cells.append(f"{rep.value(mode, normalization):.6g}")
            except KeyError:
                cells.append("")
        writer.writerow([mode.upper(), *cells])
    return out.getvalue()


# helpers -------------------------------------------------------------------------

def _partition(data: DataTable, order: np.ndarray, n_test: int, n_cal: int, train_size):
    test = data.take(order[:n_test])
    cal = data.take(order[n_test:n_test + n_cal])
    rest = order[n_test + n_cal:]
    if train_size is not None:
        rest = rest[:train_size]
    return data.take(rest), cal, test


def _check_size(data: DataTable, config: EvalConfig) -> None:
    need = config.n_test + config.calibration_size + 2
    if len(data) < need:
        raise InsufficientRows(f"{len(data)} rows, protocol needs at least {need}")


def _difficulty(normalization: str, train: DataTable, model):
    if normalization == "none":
        return None
    if normalization == "variance":
        return fit_difficulty("variance", model=model)
    if normalization == "abserror":
        return fit_difficulty("abserror", train, residuals=train.targets - model.oob_predictions())
    return fit_difficulty(normalization, train)


def _explain(state, x, mode: str, config: EvalConfig):
    if mode == "fcer":
        return explainer.explain_factual(state, x, config.percentiles)
    if mode == "ccer":
        return explainer.explain_counterfactual(state, x, config.percentiles)
    kind = "factual" if mode == "pfcer" else "counterfactual"
    return explainer.explain_probabilistic(state, x, config.threshold, kind)


def population_variance(values) -> float:
    """Population variance that is exactly 0 for identical values."""
    v = np.asarray(values, dtype=np.float64)
    # shifting by one sample keeps identical values at exactly 0
    return float(np.var(v - v[0], axis=0)) if v.ndim == 1 else np.var(v - v[0], axis=0)


def _top_rule(expl):
    return next((r for r in expl.rules if not r.is_conjunctive), None)


def _top_feature_variance(runs: list[list]) -> tuple[float, list[int]]:
    """``runs[rep][i]`` is the explanation of instance ``i`` in repetition ``rep``."""
    variances, tops = [], []
    for i in range(len(runs[0])):
        firsts = Counter()
        for rep in runs:
            rule = _top_rule(rep[i])
            if rule is not None:
                firsts[rule.feature] += 1
        if not firsts:
            tops.append(-1)
            variances.append(0.0)
            continue
        best = max(firsts.values())
        top = min(f for f, c in firsts.items() if c == best)
        tops.append(int(top))
        weights = []
        for rep in runs:
            rule = next((r for r in rep[i].rules if r.feature == top), None)
            # a feature whose rule vanished contributes nothing in that run
            weights.append(rule.weight if rule is not None else 0.0)
        variances.append(population_variance(weights))
    return float(np.mean(variances)), tops


# protocols ---------------------------------------------------------------------------

def measure_stability(config: EvalConfig, data: DataTable, normalization: str = "none") -> EvalReport:
    """Re-explain the same instances with one model and calibration set.

    Only the explainer seed changes between repetitions.
    """
    _check_size(data, config)
    order = np.random.default_rng(config.seed).permutation(len(data))
    train, cal, test = _partition(data, order, config.n_test, config.calibration_size, config.train_size)
    model = fit_forest(train, n_trees=config.n_trees, min_leaf=config.min_leaf, seed=config.seed)
    diff = _difficulty(normalization, train, model)

    runs = {mode: [] for mode in config.modes}
    for it in range(config.repetitions):
        seed = it if config.seed_policy == "iteration" else 42
        state = explainer.initialize(model, cal, diff, seed=seed)
        for mode in config.modes:
            runs[mode].append([_explain(state, x, mode, config) for x in test.rows])
    results = []
    for mode in config.modes:
        value, tops = _top_feature_variance(runs[mode]) if config.n_test else (0.0, [])
        results.append(ModeResult(mode, normalization, value, tops))
    return EvalReport("stability", results, empty=config.n_test == 0, config=_config_dict(config))


def measure_robustness(config: EvalConfig, data: DataTable, normalization: str = "none") -> EvalReport:
    """Re-explain fixed test instances with a fresh split and model per repetition.

    The test rows are drawn once with ``config.seed``; repetition ``r`` splits
    the remaining rows and seeds its forest with ``r``. The explainer seed is
    fixed at 42. The mean over instances of the variance of the model's own
    prediction is reported alongside as a baseline.
    """
    _check_size(data, config)
    order = np.random.default_rng(config.seed).permutation(len(data))
    test = data.take(order[:config.n_test])
    pool = order[config.n_test:]

    runs = {mode: [] for mode in config.modes}
    predictions = []
    for it in range(config.repetitions):
        shuffled = pool[np.random.default_rng(it).permutation(len(pool))]
        train, cal, _ = _partition(data, shuffled, 0, config.calibration_size, config.train_size)
        model = fit_forest(train, n_trees=config.n_trees, min_leaf=config.min_leaf, seed=it)
        diff = _difficulty(normalization, train, model)
        state = explainer.initialize(model, cal, diff, seed=42)
        predictions.append(predict(model, test.rows) if config.n_test else np.empty(0))
        for mode in config.modes:
            runs[mode].append([_explain(state, x, mode, config) for x in test.rows])
    pred_var = float(np.mean(population_variance(np.array(predictions)))) if config.n_test else 0.0
    results = []
    for mode in config.modes:
        value, tops = _top_feature_variance(runs[mode]) if config.n_test else (0.0, [])
        results.append(ModeResult(mode, normalization, value, tops, pred_var))
    return EvalReport("robustness", results, empty=config.n_test == 0, config=_config_dict(config))


def measure_runtime(config: EvalConfig, data: DataTable,
                    normalizations=NORMALIZATIONS) -> EvalReport:
    """Seconds per explained instance over the mode by normalization grid.

    Model fitting and explainer initialization are excluded. Each cell is
    the fastest of ``config.rounds`` timed passes; cached threshold
    calibrators are dropped before each pass.
    """
    _check_size(data, config)
    if config.n_test == 0:
        return EvalReport("runtime", [], empty=True, config=_config_dict(config))
    order = np.random.default_rng(config.seed).permutation(len(data))
    train, cal, test = _partition(data, order, config.n_test, config.calibration_size, config.train_size)
    model = fit_forest(train, n_trees=config.n_trees, min_leaf=config.min_leaf, seed=config.seed)
    results = []
    for norm in normalizations:
        state = explainer.initialize(model, cal, _difficulty(norm, train, model), seed=config.seed)
        for mode in config.modes:
            best = np.inf
            for _ in range(config.rounds):
                state.clear_cache()
                start = time.perf_counter()
                for x in test.rows:
                    _explain(state, x, mode, config)
                best = min(best, time.perf_counter() - start)
            results.append(ModeResult(mode, norm, best / config.n_test))
    return EvalReport("runtime", results, config=_config_dict(config))


def _config_dict(config: EvalConfig) -> dict:
    doc = asdict(config)
    doc["modes"] = list(config.modes)
    doc["percentiles"] = [str(p) if not np.isfinite(p) else p for p in config.percentiles]
    return doc
