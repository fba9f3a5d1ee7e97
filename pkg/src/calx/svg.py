"""Deterministic SVG plots of explanation documents.

``regular``
    top bar with the calibrated prediction and its interval, then one signed
    weight bar per rule
``uncertainty``
    as ``regular`` plus the weight interval of every rule (two-sided only)
``counterfactual``
    background band for the prediction interval and one interval bar with a
    median tick per rule
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

from .dataset import format_number
from .document import ExplanationDocument
from .errors import IncompatiblePlotKind

KINDS = ("regular", "uncertainty", "counterfactual")

WIDTH = 800
LEFT = 250           # condition text column
PLOT_X0, PLOT_X1 = 260, 680
ROW = 26
TOP = 40

POSITIVE = "#d62728"
NEGATIVE = "#1f77b4"
INTERVAL = "#f4b6b6"
BAND = "#fbe3e3"
NEUTRAL = "#555555"


def _f(v: float) -> str:
    return f"{v:.2f}"


class _Axis:
    def __init__(self, lo: float, hi: float):
        if not hi > lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi = lo, hi

    def __call__(self, v: float) -> float:
        v = min(max(v, self.lo), self.hi)  # infinite bounds run to the edge
        return PLOT_X0 + (v - self.lo) / (self.hi - self.lo) * (PLOT_X1 - PLOT_X0)


def _finite(values):
    return [v for v in values if v is not None and math.isfinite(v)]


def _text(x, y, s, anchor="start", size=12):
    return (f'<text x="{_f(x)}" y="{_f(y)}" font-size="{size}" text-anchor="{anchor}" '
            f'font-family="sans-serif">{escape(s)}</text>')


def _rect(x0, x1, y, h, fill, opacity=None):
    x0, x1 = min(x0, x1), max(x0, x1)
    extra = f' fill-opacity="{opacity}"' if opacity is not None else ""
    return f'<rect x="{_f(x0)}" y="{_f(y)}" width="{_f(x1 - x0)}" height="{_f(h)}" fill="{fill}"{extra}/>'


def _line(x0, y0, x1, y1, stroke=NEUTRAL, width=1):
    return (f'<line x1="{_f(x0)}" y1="{_f(y0)}" x2="{_f(x1)}" y2="{_f(y1)}" '
            f'stroke="{stroke}" stroke-width="{width}"/>')


def _instance_label(value) -> str:
    if isinstance(value, tuple):
        return ", ".join(format_number(v) for v in value)
    return format_number(value)


def _prediction(doc: ExplanationDocument):
    p = doc.prediction
    if doc.probabilistic:
        return p["p"], p["p_low"], p["p_high"]
    return p["median"], p["low"], p["high"]


def render_svg(doc: ExplanationDocument, kind: str = "regular") -> str:
    """Render ``doc`` as an SVG string; identical input gives identical bytes."""
    if kind not in KINDS:
        raise IncompatiblePlotKind(f"unknown plot kind {kind!r}")
    if kind == "counterfactual" and not doc.counterfactual:
        raise IncompatiblePlotKind("counterfactual plots need a counterfactual explanation")
    if kind != "counterfactual" and doc.counterfactual:
        raise IncompatiblePlotKind(f"{kind} plots need a factual explanation")
    if kind == "uncertainty" and doc.one_sided:
        raise IncompatiblePlotKind("uncertainty plots are not available for one-sided explanations")

    center, low, high = _prediction(doc)
    height = TOP + ROW * (len(doc.rules) + 2) + 10
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" '
             f'viewBox="0 0 {WIDTH} {height}">',
             f'<rect x="0" y="0" width="{WIDTH}" height="{height}" fill="white"/>']
    title = "probability" if doc.probabilistic else "prediction"
    if doc.threshold is not None:
        title = f"P(y <= {format_number(doc.threshold)})"

    # top bar
    if doc.probabilistic:
        top_axis = _Axis(0.0, 1.0)
    else:
        span = _finite([center, low, high])
        if kind == "counterfactual":
            span += _finite(v for r in doc.rules for v in (r.low, r.high))
        top_axis = _Axis(min(span), max(span))
    y = TOP
    parts.append(_text(LEFT, y + ROW * 0.65, title, anchor="end"))
    parts.append(_rect(top_axis(low), top_axis(high), y + 4, ROW - 8, INTERVAL))
    parts.append(_line(top_axis(center), y + 2, top_axis(center), y + ROW - 2, NEUTRAL, 2))
    parts.append(_text(PLOT_X1 + 10, y + ROW * 0.65,
                       f"{format_number(center)} [{format_number(low)}, {format_number(high)}]"))

    rows_y0 = TOP + 2 * ROW
    if kind == "counterfactual":
        axis = top_axis
        band_h = ROW * len(doc.rules)
        if doc.rules:
            parts.append(_rect(axis(low), axis(high), rows_y0, band_h, BAND))
            parts.append(_line(axis(center), rows_y0, axis(center), rows_y0 + band_h, NEUTRAL))
        for i, r in enumerate(doc.rules):
            y = rows_y0 + i * ROW
            parts.append(_text(LEFT, y + ROW * 0.65, r.condition_text, anchor="end"))
            parts.append(_rect(axis(r.low), axis(r.high), y + 5, ROW - 10, INTERVAL))
            parts.append(_line(axis(r.prediction_estimate), y + 3, axis(r.prediction_estimate),
                               y + ROW - 3, POSITIVE, 2))
            parts.append(_text(PLOT_X1 + 10, y + ROW * 0.65, _instance_label(r.instance_value)))
    else:
        values = [abs(r.weight) for r in doc.rules]
        if kind == "uncertainty":
            values += [abs(v) for r in doc.rules for v in _finite([r.weight_low, r.weight_high])]
        values = _finite(values)
        extent = max(values) if values and max(values) > 0 else 1.0
        axis = _Axis(-extent, extent)
        if doc.rules:
            parts.append(_line(axis(0.0), rows_y0, axis(0.0), rows_y0 + ROW * len(doc.rules)))
        for i, r in enumerate(doc.rules):
            y = rows_y0 + i * ROW
            colour = POSITIVE if r.weight > 0 else NEGATIVE
            parts.append(_text(LEFT, y + ROW * 0.65, r.condition_text, anchor="end"))
            if kind == "uncertainty":
                parts.append(_rect(axis(r.weight_low), axis(r.weight_high), y + 3, ROW - 6, colour, "0.25"))
            parts.append(_rect(axis(0.0), axis(r.weight), y + 7, ROW - 14, colour))
            parts.append(_text(PLOT_X1 + 10, y + ROW * 0.65, _instance_label(r.instance_value)))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
