"""JSON form of an explanation.

Infinite bounds of one-sided intervals are written as the strings ``"inf"``
and ``"-inf"`` since JSON has no infinity literal.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

from .explainer import Explanation
from .vennabers import ProbabilityTriple

SCHEMA_VERSION = 1


def encode_number(value):
    if value is None:
        return None
    value = float(value)
    if math.isinf(value):
        return "inf" if value > 0 else "-inf"
    return value


def decode_number(value):
    if value is None:
        return None
    if isinstance(value, str):
        if value not in ("inf", "-inf"):
            raise ValueError(f"bad number token {value!r}")
        return math.inf if value == "inf" else -math.inf
    return float(value)


def _encode_value(value):
    return [encode_number(v) for v in value] if isinstance(value, (list, tuple)) else encode_number(value)


def _decode_value(value):
    return tuple(decode_number(v) for v in value) if isinstance(value, list) else decode_number(value)


@dataclass(frozen=True)
class RuleRecord:
    condition_text: str
    feature: int | tuple[int, ...]
    weight: float
    weight_low: float
    weight_high: float
    instance_value: float | tuple[float, ...]
    prediction_estimate: float | None = None
    low: float | None = None
    high: float | None = None

    def to_dict(self) -> dict:
        doc = {
            "condition_text": self.condition_text,
            "feature": list(self.feature) if isinstance(self.feature, tuple) else self.feature,
            "weight": encode_number(self.weight),
            "weight_low": encode_number(self.weight_low),
            "weight_high": encode_number(self.weight_high),
            "instance_value": _encode_value(self.instance_value),
        }
        if self.prediction_estimate is not None:
            doc["prediction_estimate"] = encode_number(self.prediction_estimate)
            doc["low"] = encode_number(self.low)
            doc["high"] = encode_number(self.high)
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RuleRecord":
        feature = doc["feature"]
        return cls(
            condition_text=doc["condition_text"],
            feature=tuple(feature) if isinstance(feature, list) else int(feature),
            weight=decode_number(doc["weight"]),
            weight_low=decode_number(doc["weight_low"]),
            weight_high=decode_number(doc["weight_high"]),
            instance_value=_decode_value(doc["instance_value"]),
            prediction_estimate=decode_number(doc.get("prediction_estimate")),
            low=decode_number(doc.get("low")),
            high=decode_number(doc.get("high")),
        )


@dataclass(frozen=True)
class ExplanationDocument:
    """Serializable explanation.

    ``prediction`` maps ``median``/``low``/``high`` (standard regression) or
    ``p``/``p_low``/``p_high`` (probabilistic) to numbers.
    """

    mode: str
    feature_names: tuple[str, ...]
    instance: tuple[float, ...]
    prediction: dict
    rules: tuple[RuleRecord, ...]
    threshold: float | None = None
    percentiles: tuple[float, float] | None = None
    schema_version: int = SCHEMA_VERSION

    @property
    def probabilistic(self) -> bool:
        return "p" in self.prediction

    @property
    def counterfactual(self) -> bool:
        return "counterfactual" in self.mode

    @property
    def one_sided(self) -> bool:
        return self.percentiles is not None and any(math.isinf(p) for p in self.percentiles)

    @classmethod
    def from_explanation(cls, explanation: Explanation, top_k: int | None = None) -> "ExplanationDocument":
        schema = explanation.schema
        pred = explanation.prediction
        if isinstance(pred, ProbabilityTriple):
            prediction = {"p": pred.p, "p_low": pred.p_low, "p_high": pred.p_high}
        else:
            prediction = {"median": pred.median, "low": pred.low, "high": pred.high}
        counterfactual = not explanation.mode.is_factual
        rules = explanation.rules if top_k is None else explanation.rules[:top_k]
        records = tuple(
            RuleRecord(
                condition_text=r.text(schema), feature=r.feature, weight=r.weight,
                weight_low=r.weight_low, weight_high=r.weight_high,
                instance_value=r.instance_value,
                prediction_estimate=r.prediction_estimate if counterfactual else None,
                low=r.low if counterfactual else None,
                high=r.high if counterfactual else None)
            for r in rules)
        return cls(
            mode=explanation.mode.value,
            feature_names=schema.feature_names,
            instance=tuple(float(v) for v in explanation.instance),
            prediction=prediction,
            rules=records,
            threshold=explanation.threshold,
            percentiles=None if explanation.percentiles is None else tuple(float(p) for p in explanation.percentiles),
        )

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "mode": self.mode,
            "feature_names": list(self.feature_names),
            "instance": [encode_number(v) for v in self.instance],
            "prediction": {k: encode_number(v) for k, v in self.prediction.items()},
            "threshold": encode_number(self.threshold),
            "percentiles": None if self.percentiles is None else [encode_number(p) for p in self.percentiles],
            "rules": [r.to_dict() for r in self.rules],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExplanationDocument":
        if doc.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported explanation schema_version {doc.get('schema_version')!r}")
        percentiles = doc.get("percentiles")
        return cls(
            mode=doc["mode"],
            feature_names=tuple(doc["feature_names"]),
            instance=tuple(decode_number(v) for v in doc["instance"]),
            prediction={k: decode_number(v) for k, v in doc["prediction"].items()},
            rules=tuple(RuleRecord.from_dict(r) for r in doc["rules"]),
            threshold=decode_number(doc.get("threshold")),
            percentiles=None if percentiles is None else tuple(decode_number(p) for p in percentiles),
            schema_version=doc["schema_version"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def from_json(cls, text: str) -> "ExplanationDocument":
        return cls.from_dict(json.loads(text))
