import json
import math
import subprocess
import sys

import numpy as np
import pytest

from calx import explainer
from calx.cli import load_run, main
from calx.dataset import DataTable, load_csv, save_schema, write_csv
from calx.document import ExplanationDocument
from calx.synthetic import mixed


@pytest.fixture(scope="module")
def files(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = mixed(240, seed=11)
    save_schema(data.schema, root / "schema.json")
    write_csv(data, root / "data.csv")
    return root, data


@pytest.fixture(scope="module")
def run(files):
    root, _ = files
    out = root / "run"
    assert main(["fit", "--data", str(root / "data.csv"), "--schema", str(root / "schema.json"),
                 "--cal", "60", "--trees", "10", "--min-leaf", "3", "--seed", "4", "--out", str(out)]) == 0
    return out


def fit_args(root, out, *extra):
    return ["fit", "--data", str(root / "data.csv"), "--schema", str(root / "schema.json"),
            "--cal", "60", "--trees", "5", "--out", str(out), *extra]


def test_fit_writes_run(run, capsys):
    manifest = json.loads((run / "state.json").read_text())
    assert manifest["seed"] == 4 and manifest["model"] == "model.json"
    assert manifest["sizes"]["calibration"] == 60
    for name in ("schema.json", "model.json", "train.csv", "calibration.csv", "test.csv"):
        assert (run / name).is_file()


def test_explain_round_trip(run, tmp_path, capsys):
    assert main(["explain", "--run", str(run), "--rows", "0,2", "--plot", "regular", "--out", str(tmp_path)]) == 0
    docs = sorted(p.name for p in tmp_path.iterdir())
    assert docs == ["explanation_0.json", "explanation_0.svg", "explanation_2.json", "explanation_2.svg"]
    text = (tmp_path / "explanation_0.json").read_text()
    doc = ExplanationDocument.from_json(text)
    assert doc.mode == "factual" and 0 < len(doc.rules) <= 10
    assert ExplanationDocument.from_json(doc.to_json()) == doc


def test_explain_matches_library(run, tmp_path):
    state, schema, _ = load_run(run)
    assert main(["explain", "--run", str(run), "--rows", "1", "--top-k", "3", "--out", str(tmp_path)]) == 0
    rows = load_csv(run / "test.csv", schema).rows
    want = ExplanationDocument.from_explanation(explainer.explain(state, rows[1]), top_k=3)
    assert ExplanationDocument.from_json((tmp_path / "explanation_1.json").read_text()) == want


def test_one_sided_percentiles(run, tmp_path):
    assert main(["explain", "--run", str(run), "--rows", "0", "--percentiles", "-inf,90",
                 "--out", str(tmp_path)]) == 0
    raw = json.loads((tmp_path / "explanation_0.json").read_text())
    assert raw["percentiles"] == ["-inf", 90.0]
    assert raw["prediction"]["low"] == "-inf"
    # m - mean(l') with every l' = -inf
    assert all(r["weight_low"] == "inf" and isinstance(r["weight_high"], float) for r in raw["rules"])


def test_uncertainty_plot_one_sided_rejected(run, tmp_path, capsys):
    code = main(["explain", "--run", str(run), "--percentiles", "-inf,90", "--plot", "uncertainty",
                 "--out", str(tmp_path)])
    err = capsys.readouterr().err
    assert code == 2 and err.count("\n") == 1 and err.startswith("calx: error:")
    assert not list(tmp_path.iterdir())


def test_threshold_counterfactual(run, tmp_path):
    assert main(["explain", "--run", str(run), "--rows", "0", "--mode", "counterfactual",
                 "--threshold", "1.5", "--plot", "counterfactual", "--out", str(tmp_path)]) == 0
    doc = ExplanationDocument.from_json((tmp_path / "explanation_0.json").read_text())
    assert doc.mode == "probabilistic_counterfactual" and doc.threshold == 1.5
    assert all(0 <= r.prediction_estimate <= 1 for r in doc.rules)


def test_negative_threshold_flag(run, tmp_path):
    assert main(["explain", "--run", str(run), "--rows", "0", "--threshold", "-0.5",
                 "--out", str(tmp_path)]) == 0
    assert ExplanationDocument.from_json((tmp_path / "explanation_0.json").read_text()).threshold == -0.5


def test_conjunctions(run, tmp_path):
    assert main(["explain", "--run", str(run), "--rows", "0", "--conjunctions", "2", "--top-k", "50",
                 "--out", str(tmp_path)]) == 0
    doc = ExplanationDocument.from_json((tmp_path / "explanation_0.json").read_text())
    assert any(isinstance(r.feature, tuple) for r in doc.rules)


def test_missing_schema(files, tmp_path, capsys):
    root, _ = files
    code = main(["fit", "--data", str(root / "data.csv"), "--schema", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "run")])
    err = capsys.readouterr().err
    assert code == 2 and "schema not found" in err and err.count("\n") == 1


def test_bad_rows(run, tmp_path, capsys):
    assert main(["explain", "--run", str(run), "--rows", "9999", "--out", str(tmp_path)]) == 2
    assert "out of range" in capsys.readouterr().err


def test_difficulty_stored_and_used(files, tmp_path, capsys):
    root, _ = files
    out = tmp_path / "run"
    assert main(fit_args(root, out, "--difficulty", "variance")) == 0
    manifest = json.loads((out / "state.json").read_text())
    assert manifest["difficulty"]["mode"] == "variance"
    state, _, _ = load_run(out)
    assert state.cps.normalized


def test_calx_seed_env(files, tmp_path, monkeypatch, capsys):
    root, _ = files
    monkeypatch.setenv("CALX_SEED", "17")
    assert main(fit_args(root, tmp_path / "a")) == 0
    assert json.loads((tmp_path / "a" / "state.json").read_text())["seed"] == 17
    assert main(fit_args(root, tmp_path / "b", "--seed", "3")) == 0
    assert json.loads((tmp_path / "b" / "state.json").read_text())["seed"] == 3
    monkeypatch.setenv("CALX_SEED", "x")
    assert main(fit_args(root, tmp_path / "c")) == 2


def _predictions_file(data, path, rows):
    table = DataTable(data.rows[rows], data.rows[rows, 0] * 2.0, data.schema)
    write_csv(table, path, "prediction")


@pytest.mark.parametrize("mode", ["variance", "abserror"])
def test_predictions_reject_ensemble_difficulty(files, tmp_path, capsys, mode):
    root, data = files
    _predictions_file(data, tmp_path / "p.csv", np.arange(len(data)))
    code = main(fit_args(root, tmp_path / "run", "--predictions", str(tmp_path / "p.csv"), "--difficulty", mode))
    assert code == 2 and "--difficulty" in capsys.readouterr().err


def test_predictions_missing_rows_exported(files, tmp_path, capsys):
    root, data = files
    _predictions_file(data, tmp_path / "p.csv", np.arange(len(data)))
    out = tmp_path / "run"
    assert main(fit_args(root, out, "--predictions", str(tmp_path / "p.csv"))) == 0
    assert not (out / "model.json").exists()
    code = main(["explain", "--run", str(out), "--rows", "0", "--out", str(tmp_path / "e")])
    assert code == 2 and "no prediction" in capsys.readouterr().err
    lines = (out / "missing_predictions.csv").read_text().splitlines()
    assert lines[0] == ",".join(data.schema.feature_names) and len(lines) > 1


def test_evaluate_stability(files, tmp_path, capsys):
    root, data = files
    out = tmp_path / "ev"
    assert main(["evaluate", "--data", str(root / "data.csv"), "--schema", str(root / "schema.json"),
                 "--metric", "stability", "--modes", "fcer,ccer", "--repetitions", "3", "--n-test", "2",
                 "--cal", "60", "--trees", "5", "--out", str(out)]) == 0
    report = json.loads((out / "stability.json").read_text())
    assert [r["value"] for r in report["results"]] == [0.0, 0.0]
    assert (out / "summary.csv").read_text() == "mode,stability\nFCER,0\nCCER,0\n"


@pytest.mark.parametrize("args", [["--metric", "speed"], ["--metric", "stability", "--modes", "xcer"],
                                  ["--metric", "stability", "--normalizations", "magic"]])
def test_evaluate_bad_lists(files, tmp_path, capsys, args):
    root, _ = files
    code = main(["evaluate", "--data", str(root / "data.csv"), "--schema", str(root / "schema.json"),
                 "--out", str(tmp_path), *args])
    assert code == 2 and capsys.readouterr().err.count("\n") == 1


def test_argparse_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["explain", "--mode", "sideways"])
    assert exc.value.code == 2
    assert capsys.readouterr().err.count("\n") == 1


def test_console_entry_point(run, tmp_path):
    proc = subprocess.run([sys.executable, "-m", "calx.cli", "explain", "--run", str(run), "--rows", "0",
                           "--percentiles", "-inf,90", "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    doc = ExplanationDocument.from_json((tmp_path / "explanation_0.json").read_text())
    assert doc.percentiles == (-math.inf, 90.0)
