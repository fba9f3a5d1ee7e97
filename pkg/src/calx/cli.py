"""Command-line interface: ``calx fit``, ``calx explain`` and ``calx evaluate``.

``fit`` splits a CSV data set, fits a forest (or wraps a predictions file) and
writes a run directory::

    run/
      state.json        manifest: seed, target, difficulty choice, file names
      schema.json
      model.json        forest dump (absent with --predictions)
      predictions.csv   external model predictions (only with --predictions)
      train.csv  calibration.csv  test.csv

``explain`` rebuilds the calibrated explainer from a run directory and writes
one JSON document (and optionally one SVG) per explained row. ``evaluate``
runs the stability / robustness / runtime protocols and writes JSON and CSV.

The default seed is 42, overridden by the ``CALX_SEED`` environment variable
and by ``--seed``. Every validation error exits with status 2 and a single
line on stderr.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from . import explainer, harness
from .dataset import DataTable, SplitSpec, load_csv, load_schema, split, write_csv
from .difficulty import fit_difficulty
from .document import ExplanationDocument
from .errors import CalxError, ConflictingFlags
from .forest import ForestModel, PredictionTable, fit_forest
from .svg import KINDS, render_svg

STATE_FORMAT = "calx-state"
STATE_VERSION = 1
DIFFICULTIES = ("none", "distance", "std", "abserror", "variance")
PREDICTION_COLUMN = "prediction"


class CliError(CalxError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        # keep diagnostics to one line
        self.exit(2, f"{self.prog}: error: {message}\n")


def default_seed() -> int:
    raw = os.environ.get("CALX_SEED")
    if raw is None or raw == "":
        return 42
    try:
        return int(raw)
    except ValueError:
        raise CliError(f"CALX_SEED must be an integer, got {raw!r}") from None


def parse_percentiles(text: str) -> tuple[float, float]:
    try:
        low, high = (float(p) for p in text.split(","))
    except ValueError:
        raise CliError(f"--percentiles expects 'low,high', got {text!r}") from None
    return low, high


def _atomic_write(path: Path, text: str) -> None:
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise CliError(f"{what} not found: {path}")
    return p


# fit -----------------------------------------------------------------------------

def cmd_fit(args) -> int:
    schema = load_schema(_existing(args.schema, "schema"))
    target = args.target or schema.target
    if not target:
        raise CliError("no target column: pass --target or set 'target' in the schema")
    data = load_csv(_existing(args.data, "data"), schema, target)
    seed = args.seed if args.seed is not None else default_seed()
    train, cal, test = split(data, SplitSpec(args.train_fraction, args.cal, seed))

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": STATE_FORMAT,
        "version": STATE_VERSION,
        "seed": seed,
        "target": target,
        "tau": 0.5,
        "difficulty": None,
        "model": None,
        "predictions": None,
        "files": {"schema": "schema.json", "train": "train.csv",
                  "calibration": "calibration.csv", "test": "test.csv"},
        "sizes": {"train": len(train), "calibration": len(cal), "test": len(test)},
    }
    if args.predictions:
        if args.difficulty in ("variance", "abserror"):
            raise CliError(f"--difficulty {args.difficulty} needs ensemble member or out-of-bag "
                           "predictions, which a predictions file cannot provide")
        table = load_csv(_existing(args.predictions, "predictions file"), schema, PREDICTION_COLUMN)
        write_csv(table, out / "predictions.csv", PREDICTION_COLUMN)
        manifest["predictions"] = "predictions.csv"
    else:
        model = fit_forest(train, n_trees=args.trees, max_depth=args.max_depth,
                           min_leaf=args.min_leaf, seed=seed)
        _atomic_write(out / "model.json", json.dumps(model.to_dict()))
        manifest["model"] = "model.json"
    if args.difficulty != "none":
        manifest["difficulty"] = {"mode": args.difficulty, "k": args.k, "beta": args.beta}

    schema_doc = dict(schema.to_dict(), target=target)
    _atomic_write(out / "schema.json", json.dumps(schema_doc, indent=2))
    write_csv(train, out / "train.csv", target)
    write_csv(cal, out / "calibration.csv", target)
    write_csv(test, out / "test.csv", target)
    _atomic_write(out / "state.json", json.dumps(manifest, indent=2))
    print(f"train={len(train)} calibration={len(cal)} test={len(test)} -> {out}")
    return 0


# explain -------------------------------------------------------------------------

def load_run(run_dir: str | os.PathLike):
    """Rebuild ``(state, schema, manifest)`` from a ``calx fit`` directory."""
    run = Path(run_dir)
    manifest_path = _existing(str(run / "state.json"), "state manifest")
    manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
    if manifest.get("format") != STATE_FORMAT or manifest.get("version") != STATE_VERSION:
        raise CliError(f"{manifest_path}: not a version {STATE_VERSION} calx state manifest")
    files = manifest["files"]
    schema = load_schema(run / files["schema"])
    target = manifest["target"]
    train = load_csv(run / files["train"], schema, target)
    cal = load_csv(run / files["calibration"], schema, target)
    if manifest.get("model"):
        model = ForestModel.from_dict(json.loads((run / manifest["model"]).read_text(encoding="utf-8")))
    else:
        table = load_csv(run / manifest["predictions"], schema, PREDICTION_COLUMN)
        model = PredictionTable(table.rows, table.targets)
    diff = None
    spec = manifest.get("difficulty")
    if spec:
        mode = spec["mode"]
        if mode == "variance":
            diff = fit_difficulty(mode, model=model, beta=spec["beta"])
        elif mode == "abserror":
            diff = fit_difficulty(mode, train, residuals=train.targets - model.oob_predictions(),
                                  k=spec["k"], beta=spec["beta"])
        else:
            diff = fit_difficulty(mode, train, k=spec["k"], beta=spec["beta"])
    state = explainer.initialize(model, cal, diff, seed=manifest["seed"], tau=manifest.get("tau", 0.5))
    return state, schema, manifest


def _select_rows(table: DataTable, spec: str | None) -> list[int]:
    if spec is None or spec == "all":
        return list(range(len(table)))
    try:
        rows = [int(tok) for tok in spec.split(",")]
    except ValueError:
        raise CliError(f"--rows expects comma-separated row numbers or 'all', got {spec!r}") from None
    bad = [r for r in rows if not 0 <= r < len(table)]
    if bad:
        raise CliError(f"--rows {bad[0]} out of range for {len(table)} rows")
    return rows


def cmd_explain(args) -> int:
    percentiles = parse_percentiles(args.percentiles)
    one_sided = any(math.isinf(p) for p in percentiles)
    if args.plot == "uncertainty" and one_sided:
        raise ConflictingFlags("uncertainty plots are not available for one-sided explanations")
    if args.plot == "counterfactual" and args.mode != "counterfactual":
        raise ConflictingFlags("--plot counterfactual needs --mode counterfactual")
    if args.plot in ("regular", "uncertainty") and args.mode == "counterfactual":
        raise ConflictingFlags(f"--plot {args.plot} needs --mode factual")
    if args.top_k is not None and args.top_k < 1:
        raise CliError("--top-k must be positive")

    state, schema, manifest = load_run(args.run)
    run = Path(args.run)
    data_path = Path(args.data) if args.data else run / manifest["files"]["test"]
    table = load_csv(_existing(str(data_path), "data"), schema)
    rows = _select_rows(table, args.rows)
    out = Path(args.out) if args.out else run / "explanations"
    out.mkdir(parents=True, exist_ok=True)

    written = []
    for i in rows:
        try:
            expl = explainer.explain(state, table.rows[i], args.mode, percentiles, args.threshold)
            if args.conjunctions:
                expl = explainer.add_conjunctions(expl, state, max_order=args.conjunctions)
        except ValueError:
            # NaN predictions for unscored rows surface as inconsistent summaries
            _check_predictions(state.model, run)
            raise
        _check_predictions(state.model, run)
        doc = ExplanationDocument.from_explanation(expl, top_k=args.top_k)
        path = out / f"explanation_{i}.json"
        _atomic_write(path, doc.to_json() + "\n")
        written.append(path)
        if args.plot:
            svg_path = out / f"explanation_{i}.svg"
            _atomic_write(svg_path, render_svg(doc, args.plot))
            written.append(svg_path)
    for p in written:
        print(p)
    return 0


def _check_predictions(model, run: Path) -> None:
    if not isinstance(model, PredictionTable) or not model.missing:
        return
    path = run / "missing_predictions.csv"
    header = ",".join(load_schema(run / "schema.json").feature_names)
    lines = [header] + [",".join(repr(v) for v in row) for row in model.missing]
    _atomic_write(path, "\n".join(lines) + "\n")
    raise CliError(f"{len(model.missing)} perturbed rows have no prediction; "
                   f"score the rows in {path} and add them to the predictions file")


# evaluate ---------------------------------------------------------------------------

def _split_list(text: str, allowed, flag: str) -> tuple[str, ...]:
    items = tuple(t.strip() for t in text.split(",") if t.strip())
    bad = [t for t in items if t not in allowed]
    if bad or not items:
        raise CliError(f"{flag}: unknown value {bad[0] if bad else text!r}; "
                       f"choose from {', '.join(allowed)}")
    return items


def cmd_evaluate(args) -> int:
    metrics = _split_list(args.metric, harness.METRICS, "--metric")
    modes = _split_list(args.modes, harness.MODES, "--modes")
    norms = _split_list(args.normalizations, harness.NORMALIZATIONS, "--normalizations")
    schema = load_schema(_existing(args.schema, "schema"))
    target = args.target or schema.target
    if not target:
        raise CliError("no target column: pass --target or set 'target' in the schema")
    data = load_csv(_existing(args.data, "data"), schema, target)
    config = harness.EvalConfig(
        repetitions=args.repetitions, n_test=args.n_test, calibration_size=args.cal,
        threshold=args.threshold, modes=modes, train_size=args.train_size,
        n_trees=args.trees, min_leaf=args.min_leaf,
        seed=args.seed if args.seed is not None else default_seed(), rounds=args.rounds)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    reports = []
    for metric in metrics:
        if metric == "runtime":
            report = harness.measure_runtime(config, data, norms)
        else:
            measure = harness.measure_stability if metric == "stability" else harness.measure_robustness
            parts = [measure(config, data, norm) for norm in norms]
            report = harness.EvalReport(metric, [r for p in parts for r in p.results],
                                        empty=any(p.empty for p in parts), config=parts[0].config)
        reports.append(report)
        _atomic_write(out / f"{metric}.json", report.to_json() + "\n")
        _atomic_write(out / f"{metric}.csv", report.to_csv())
        print(out / f"{metric}.json")
    _atomic_write(out / "summary.csv", harness.summary_csv(reports, norms[0]))
    print(harness.summary_csv(reports, norms[0]), end="")
    return 0


# parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="calx", description="Calibrated explanations for regression models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="split data and fit the underlying model")
    fit.add_argument("--data", required=True, help="CSV file with a header row")
    fit.add_argument("--schema", required=True, help="schema JSON file")
    fit.add_argument("--target", help="target column (defaults to the schema's target)")
    fit.add_argument("--cal", type=int, default=500, help="calibration set size")
    fit.add_argument("--train-fraction", type=float, default=0.6)
    fit.add_argument("--seed", type=int, help="split and forest seed (default: CALX_SEED or 42)")
    fit.add_argument("--out", required=True, help="run directory")
    fit.add_argument("--trees", type=int, default=100)
    fit.add_argument("--max-depth", type=int)
    fit.add_argument("--min-leaf", type=int, default=1)
    fit.add_argument("--difficulty", choices=DIFFICULTIES, default="none")
    fit.add_argument("--k", type=int, help="neighbours for the kNN difficulty estimators")
    fit.add_argument("--beta", type=float, default=0.01)
    fit.add_argument("--predictions", help=f"CSV of external model predictions "
                                           f"(feature columns plus '{PREDICTION_COLUMN}')")
    fit.set_defaults(func=cmd_fit)

    exp = sub.add_parser("explain", help="explain rows with a fitted run")
    exp.add_argument("--run", required=True, help="run directory written by 'calx fit'")
    exp.add_argument("--data", help="rows to explain (default: the run's test split)")
    exp.add_argument("--rows", help="comma-separated row numbers or 'all' (default)")
    exp.add_argument("--mode", choices=("factual", "counterfactual"), default="factual")
    exp.add_argument("--percentiles", default="5,95",
                     help="low,high percentiles; -inf or inf give one-sided intervals")
    exp.add_argument("--threshold", type=float,
                     help="explain P(y <= threshold) instead of the median")
    exp.add_argument("--conjunctions", type=int, choices=(2, 3))
    exp.add_argument("--plot", choices=KINDS)
    exp.add_argument("--top-k", type=int, default=10, help="rules kept per document (default 10)")
    exp.add_argument("--out", help="output directory (default: RUN/explanations)")
    exp.set_defaults(func=cmd_explain)

    ev = sub.add_parser("evaluate", help="run the stability/robustness/runtime protocols")
    ev.add_argument("--data", required=True)
    ev.add_argument("--schema", required=True)
    ev.add_argument("--target")
    ev.add_argument("--metric", required=True, help="comma-separated: stability, robustness, runtime")
    ev.add_argument("--modes", default=",".join(harness.MODES))
    ev.add_argument("--normalizations", default="none")
    ev.add_argument("--repetitions", type=int, default=100)
    ev.add_argument("--n-test", type=int, default=10)
    ev.add_argument("--cal", type=int, default=500)
    ev.add_argument("--train-size", type=int)
    ev.add_argument("--threshold", type=float, default=0.5)
    ev.add_argument("--trees", type=int, default=100)
    ev.add_argument("--min-leaf", type=int, default=1)
    ev.add_argument("--rounds", type=int, default=3)
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out", required=True)
    ev.set_defaults(func=cmd_evaluate)
    return parser


def _join_negative_values(argv: list[str]) -> list[str]:
    # argparse would read "-inf,90" as an option; bind it to its flag instead
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in ("--percentiles", "--threshold") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(_join_negative_values(argv))
    try:
        return args.func(args)
    except (CalxError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        message = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
        print(f"calx: error: {message}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
