"""Scoring extracted properties against gold annotations.

Each gold sample carries exactly one property class and yields one verdict:
TP when the prediction matches the gold value, FP when a prediction is
present but wrong (including a quantity given without a unit), FN when the
prediction is missing or its response could not be parsed. Predictions whose
sample id has no gold entry count as FP for every property they mention.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from decimal import Decimal, localcontext
from fractions import Fraction
from typing import Iterable, Mapping

from .corpus import InstructionSample
from .property_model import (
    DesignType,
    PropertyClass,
    Quantity,
    QuantityError,
    RecordFragment,
    normalize_design_label,
    parse_quantity,
)

REL_TOL = 1e-9
ABS_TOL = 1e-9


class UndefinedMetric(ArithmeticError):
    pass


class Verdict(enum.Enum):
    TP = "TP"
    FP = "FP"
    FN = "FN"


@dataclass(frozen=True)
class MatchOutcome:
    sample_id: str
    property_class: PropertyClass
    verdict: Verdict
    predicted: object = None
    gold: object = None

    def to_json(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "property": self.property_class.value,
            "verdict": self.verdict.value,
            "predicted": _show(self.predicted),
            "gold": _show(self.gold),
        }


def _show(value):
    if value is None or isinstance(value, str):
        return value
    if isinstance(value, Quantity):
        return value.render()
    if isinstance(value, DesignType):
        return value.label
    return str(value)


def _norm_text(text: str) -> str:
    return " ".join(text.split()).casefold()


def _as_quantity(value, prop: PropertyClass) -> Quantity | None:
    if isinstance(value, Quantity):
        return value
    try:
        return parse_quantity(str(value), prop.quantity_kind)
    except QuantityError:
        return None


def match_value(predicted, gold, prop: PropertyClass) -> Verdict:
    """Verdict for one predicted value against a present gold value.

    ``predicted`` may be a typed value or the raw surface string; None or a
    blank string means nothing was extracted.
    """
    if gold is None:
        raise ValueError("gold value is required")
    prop = PropertyClass(prop)
    if predicted is None or (isinstance(predicted, str) and not predicted.strip()):
        return Verdict.FN
    if prop.quantity_kind is not None:
        got = _as_quantity(predicted, prop)
        want = _as_quantity(gold, prop)
        if want is None:
            raise ValueError(f"gold value {gold!r} is not a {prop.value} quantity")
        if got is None or got.kind is not want.kind:
            return Verdict.FP
        ok = math.isclose(got.base_value, want.base_value, rel_tol=REL_TOL, abs_tol=ABS_TOL)
        return Verdict.TP if ok else Verdict.FP
    if prop is PropertyClass.DESIGN_TYPE:
        got = predicted.label if isinstance(predicted, DesignType) else normalize_design_label(str(predicted))
        want = gold.label if isinstance(gold, DesignType) else normalize_design_label(str(gold))
        return Verdict.TP if _norm_text(got) == _norm_text(want) else Verdict.FP
    return Verdict.TP if _norm_text(str(predicted)) == _norm_text(str(gold)) else Verdict.FP


def predicted_value(fragment: RecordFragment | None, prop: PropertyClass):
    """The raw string the model produced for ``prop``, else the typed value."""
    if fragment is None:
        return None
    raw = fragment.raw.get(prop.value)
    return raw if raw is not None else fragment.get(prop)


@dataclass(frozen=True)
class PropertyMetrics:
    tp: int
    fp: int
    fn: int

    @property
    def precision(self) -> Fraction | None:
        return None if self.tp + self.fp == 0 else Fraction(self.tp, self.tp + self.fp)

    @property
    def recall(self) -> Fraction | None:
        return None if self.tp + self.fn == 0 else Fraction(self.tp, self.tp + self.fn)


def precision(tp: int, fp: int) -> Fraction:
    if tp + fp == 0:
        raise UndefinedMetric("precision is undefined when tp + fp = 0")
    return Fraction(tp, tp + fp)


def recall(tp: int, fn: int) -> Fraction:
    if tp + fn == 0:
        raise UndefinedMetric("recall is undefined when tp + fn = 0")
    return Fraction(tp, tp + fn)


def render_percent(value: Fraction | None) -> str | None:
    """Exact ratio as a percentage rounded to 4 significant figures."""
    if value is None:
        return None
    with localcontext() as ctx:
        ctx.prec = 4
        pct = Decimal(value.numerator * 100) / Decimal(value.denominator)
    return format(pct, "f")


def _mean(values: list[Fraction]) -> Fraction | None:
    return sum(values, Fraction(0)) / len(values) if values else None


@dataclass(frozen=True)
class MetricsReport:
    per_property: dict[PropertyClass, PropertyMetrics]
    outcomes: tuple[MatchOutcome, ...] = ()

    @property
    def macro_precision(self) -> Fraction | None:
        return _mean([m.precision for m in self.per_property.values() if m.precision is not None])

    @property
    def macro_recall(self) -> Fraction | None:
        return _mean([m.recall for m in self.per_property.values() if m.recall is not None])

    @property
    def micro(self) -> PropertyMetrics:
        ms = self.per_property.values()
        return PropertyMetrics(sum(m.tp for m in ms), sum(m.fp for m in ms), sum(m.fn for m in ms))

    def to_json(self) -> dict:
        per = {}
        for prop, m in self.per_property.items():
            per[prop.value] = {
                "tp": m.tp,
                "fp": m.fp,
                "fn": m.fn,
                "precision": render_percent(m.precision),
                "recall": render_percent(m.recall),
            }
        micro = self.micro
        return {
            "per_property": per,
            "macro": {"precision": render_percent(self.macro_precision), "recall": render_percent(self.macro_recall)},
            "micro": {
                "tp": micro.tp,
                "fp": micro.fp,
                "fn": micro.fn,
                "precision": render_percent(micro.precision),
                "recall": render_percent(micro.recall),
            },
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True) + "\n"

    def table(self) -> str:
        def pct(v):
            s = render_percent(v)
            return "n/a" if s is None else s + " %"

        head = f"{'Property':<16} {'TP':>4} {'FP':>4} {'FN':>4}  {'Precision':>10}  {'Recall':>10}"
        lines = [head, "-" * len(head)]
        for prop, m in self.per_property.items():
            lines.append(f"{prop.value:<16} {m.tp:>4} {m.fp:>4} {m.fn:>4}  {pct(m.precision):>10}  {pct(m.recall):>10}")
        lines.append("-" * len(head))
        lines.append(f"{'macro average':<16} {'':>4} {'':>4} {'':>4}  "
                     f"{pct(self.macro_precision):>10}  {pct(self.macro_recall):>10}")
        mi = self.micro
        lines.append(f"{'micro average':<16} {mi.tp:>4} {mi.fp:>4} {mi.fn:>4}  {pct(mi.precision):>10}  {pct(mi.recall):>10}")
        return "\n".join(lines) + "\n"


def compute_metrics(outcomes: Iterable[MatchOutcome], classes: Iterable[PropertyClass] = tuple(PropertyClass)) -> MetricsReport:
    outcomes = tuple(outcomes)
    counts = {PropertyClass(p): [0, 0, 0] for p in classes}
    slot = {Verdict.TP: 0, Verdict.FP: 1, Verdict.FN: 2}
    for o in outcomes:
        counts.setdefault(o.property_class, [0, 0, 0])[slot[o.verdict]] += 1
    per = {p: PropertyMetrics(*c) for p, c in counts.items()}
    return MetricsReport(per, outcomes)


def score_run(predictions: Mapping[str, RecordFragment | None], gold: Iterable[InstructionSample]) -> list[MatchOutcome]:
    outcomes = []
    gold_ids = set()
    for sample in gold:
        gold_ids.add(sample.sample_id)
        prop = sample.property_class
        want = sample.expected.get(prop)
        got = predicted_value(predictions.get(sample.sample_id), prop)
        outcomes.append(MatchOutcome(sample.sample_id, prop, match_value(got, want, prop), got, want))
    for sample_id in sorted(set(predictions) - gold_ids):
        frag = predictions[sample_id]
        if frag is None:
            continue
        for prop in PropertyClass:
            got = predicted_value(frag, prop)
            if got is not None:
                outcomes.append(MatchOutcome(sample_id, prop, Verdict.FP, got, None))
    return outcomes


def evaluate_run(predictions: Mapping[str, RecordFragment | None], gold: Iterable[InstructionSample]) -> MetricsReport:
    return compute_metrics(score_run(predictions, gold))
