"""Closed-list structural rules checked against a built graph."""

from __future__ import annotations

from dataclasses import dataclass, field

from .build import Mapping, load_mapping
from .terms import XSD_DOUBLE, Graph, Iri, Literal

REQUIRED_PATH = "requiredPath"
DATATYPE_OF = "datatypeOf"
MAX_COUNT = "maxCount"
VALUE_IN = "valueIn"


@dataclass(frozen=True)
class ShapeViolation:
    rule_id: str
    focus: Iri
    path: Iri
    message: str

    def to_json(self) -> dict:
        return {"rule": self.rule_id, "focus": self.focus.value, "path": self.path.value, "message": self.message}


@dataclass(frozen=True)
class ShapeRule:
    """One constraint on the values of ``path`` at each targeted focus node.

    Focus nodes are the instances of ``target_class`` or, when that is None,
    the objects of ``target_objects_of``.
    """

    rule_id: str
    constraint: str
    path: Iri
    target_class: Iri | None = None
    target_objects_of: Iri | None = None
    max_count: int | None = None
    datatype: Iri | None = None
    min_inclusive: float | None = None
    allowed: frozenset[Iri] = frozenset()
    literal_only: bool = False

    def focus_nodes(self, graph: Graph) -> list[Iri]:
        if self.target_class is not None:
            nodes = graph.instances(self.target_class)
        else:
            nodes = {t.object for t in graph.with_predicate(self.target_objects_of) if isinstance(t.object, Iri)}
        return sorted(nodes, key=lambda n: n.value)

    def check(self, graph: Graph) -> list[ShapeViolation]:
        out = []
        for node in self.focus_nodes(graph):
            values = sorted(graph.objects(node, self.path), key=lambda t: t.sort_key())
            out.extend(self._check_node(node, values))
        return out

    def _violation(self, node, message):
        return ShapeViolation(self.rule_id, node, self.path, message)

    def _check_node(self, node: Iri, values: list) -> list[ShapeViolation]:
        if self.constraint == REQUIRED_PATH:
            usable = [v for v in values if isinstance(v, Literal)] if self.literal_only else values
            if not usable:
                return [self._violation(node, "required value is missing")]
        elif self.constraint == MAX_COUNT:
            if len(values) > self.max_count:
                return [self._violation(node, f"{len(values)} values, at most {self.max_count} allowed")]
        elif self.constraint == DATATYPE_OF:
            out = []
            for v in values:
                if not isinstance(v, Literal) or v.datatype != self.datatype:
                    out.append(self._violation(node, f"value {v} is not a {self.datatype.value} literal"))
                elif self.min_inclusive is not None and v.numeric_value() < self.min_inclusive:
                    out.append(self._violation(node, f"value {v.lexical} is below {self.min_inclusive}"))
            return out
        elif self.constraint == VALUE_IN:
            return [self._violation(node, f"value {v} is not allowed") for v in values if v not in self.allowed]
        else:
            raise ValueError(f"unknown constraint {self.constraint!r}")
        return []


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[ShapeViolation, ...] = field(default_factory=tuple)

    @property
    def conforms(self) -> bool:
        return not self.violations

    def __len__(self) -> int:
        return len(self.violations)

    def rule_ids(self) -> list[str]:
        return [v.rule_id for v in self.violations]

    def to_json(self) -> dict:
        return {"conforms": self.conforms, "violations": [v.to_json() for v in self.violations]}


def default_rules(mapping: Mapping | None = None) -> list[ShapeRule]:
    m = mapping or load_mapping()
    device = m.value("device.class")
    quantity = m.value("quantity.class")
    article = m.value("article.class")
    rules = [
        ShapeRule("device-heterostructure-max", MAX_COUNT, m.predicate("device.heterostructure"), device, max_count=1),
    ]
    for part in ("value", "unit", "kind"):
        path = m.predicate(f"quantity.{part}")
        rules.append(ShapeRule(f"quantity-{part}-required", REQUIRED_PATH, path, quantity))
        rules.append(ShapeRule(f"quantity-{part}-max", MAX_COUNT, path, quantity, max_count=1))
    rules += [
        ShapeRule(
            "temperature-value-datatype",
            DATATYPE_OF,
            m.predicate("quantity.value"),
            target_objects_of=m.predicate("device.temperature"),
            datatype=XSD_DOUBLE,
            min_inclusive=0.0,
        ),
        ShapeRule(
            "working-mode-in",
            VALUE_IN,
            m.predicate("device.working_mode"),
            device,
            allowed=frozenset({m.value("value.mode.ContinuousWave"), m.value("value.mode.Pulsed")}),
        ),
        ShapeRule("device-source-required", REQUIRED_PATH, m.predicate("device.source"), device),
        ShapeRule("device-source-max", MAX_COUNT, m.predicate("device.source"), device, max_count=1),
        ShapeRule("article-doi-required", REQUIRED_PATH, m.predicate("article.doi"), article, literal_only=True),
    ]
    return rules


def validate_consistency(graph: Graph, rules: list[ShapeRule] | None = None) -> ValidationReport:
    rules = default_rules() if rules is None else rules
    violations = []
    for rule in rules:
        violations.extend(rule.check(graph))
    return ValidationReport(tuple(violations))
