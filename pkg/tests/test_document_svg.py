import math
import re

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calx import explainer
from calx.document import ExplanationDocument, RuleRecord, decode_number, encode_number
from calx.errors import IncompatiblePlotKind
from calx.svg import NEGATIVE, POSITIVE, render_svg


def test_number_tokens():
    assert encode_number(math.inf) == "inf" and encode_number(-math.inf) == "-inf"
    assert decode_number("-inf") == -math.inf and decode_number(1) == 1.0
    with pytest.raises(ValueError):
        decode_number("nan")


@pytest.mark.parametrize("mode", ["factual", "counterfactual"])
@pytest.mark.parametrize("percentiles", [(5, 95), (-math.inf, 90)])
def test_round_trip_from_explanation(mixed_state, mixed_split, mode, percentiles):
    x = mixed_split[2].rows[0]
    doc = ExplanationDocument.from_explanation(explainer.explain(mixed_state, x, mode, percentiles))
    text = doc.to_json()
    assert "NaN" not in text and "Infinity" not in text
    assert ExplanationDocument.from_json(text) == doc


def test_round_trip_probabilistic_and_conjunctive(mixed_state, mixed_split):
    x = mixed_split[2].rows[1]
    expl = explainer.add_conjunctions(explainer.explain(mixed_state, x, threshold=2.0), mixed_state, x)
    doc = ExplanationDocument.from_explanation(expl)
    assert doc.probabilistic and any(isinstance(r.feature, tuple) for r in doc.rules)
    assert ExplanationDocument.from_json(doc.to_json()) == doc


def test_top_k_truncates(mixed_state, mixed_split):
    expl = explainer.explain(mixed_state, mixed_split[2].rows[0])
    assert len(ExplanationDocument.from_explanation(expl, top_k=2).rules) == 2


def test_bad_schema_version():
    with pytest.raises(ValueError):
        ExplanationDocument.from_dict({"schema_version": 99})


finite = st.floats(-1e6, 1e6)
bound = st.one_of(finite, st.just(math.inf), st.just(-math.inf))


@st.composite
def documents(draw):
    n = draw(st.integers(0, 5))
    rules = tuple(RuleRecord(f"x{i} <= 1", i, draw(finite), draw(bound), draw(bound), draw(finite))
                  for i in range(n))
    return ExplanationDocument("factual", tuple(f"x{i}" for i in range(5)), (0.0,) * 5,
                               {"median": draw(finite), "low": draw(bound), "high": draw(bound)},
                               rules, percentiles=(draw(st.sampled_from([-math.inf, 5.0])), 95.0))


@settings(max_examples=100, deadline=None)
@given(documents())
def test_round_trip_property(doc):
    assert ExplanationDocument.from_json(doc.to_json()) == doc


def _doc(weights, mode="factual", **extra):
    rules = tuple(RuleRecord(f"x{i} <= 1", i, w, w - 1, w + 1, 0.5, **extra) for i, w in enumerate(weights))
    return ExplanationDocument(mode, ("x0", "x1", "x2"), (0.5, 0.5, 0.5),
                               {"median": 1.0, "low": 0.0, "high": 2.0}, rules, percentiles=(5.0, 95.0))


def test_svg_one_bar_per_rule_with_sign_colours():
    svg = render_svg(_doc([0.4, -0.2, 0.1]))
    assert svg == render_svg(_doc([0.4, -0.2, 0.1]))
    assert svg.count(f'fill="{POSITIVE}"') == 2
    assert svg.count(f'fill="{NEGATIVE}"') == 1


def test_svg_empty_rules_is_valid():
    svg = render_svg(_doc([]))
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_uncertainty_adds_interval_bars():
    svg = render_svg(_doc([0.4, -0.2]), "uncertainty")
    assert svg.count('opacity="0.25"') == 2


def test_counterfactual_band_spans_prediction_interval():
    doc = _doc([0.4], "counterfactual", prediction_estimate=1.5, low=0.5, high=3.0)
    svg = render_svg(doc, "counterfactual")
    band = re.search(r'<rect x="([\d.]+)" y="[\d.]+" width="([\d.]+)" height="[\d.]+" fill="#fbe3e3"', svg)
    top = re.search(r'<rect x="([\d.]+)" y="[\d.]+" width="([\d.]+)" height="[\d.]+" fill="#f4b6b6"', svg)
    assert band.groups() == top.groups()


@pytest.mark.parametrize("mode,kind", [("factual", "counterfactual"), ("counterfactual", "regular"),
                                       ("factual", "pie")])
def test_incompatible_kinds(mode, kind):
    with pytest.raises(IncompatiblePlotKind):
        render_svg(_doc([0.1], mode, prediction_estimate=1.0, low=0.0, high=2.0), kind)


def test_uncertainty_rejected_for_one_sided():
    doc = _doc([0.1])
    one_sided = ExplanationDocument(doc.mode, doc.feature_names, doc.instance, doc.prediction, doc.rules,
                                    percentiles=(-math.inf, 90.0))
    with pytest.raises(IncompatiblePlotKind):
        render_svg(one_sided, "uncertainty")
    assert render_svg(one_sided, "regular")
