"""Record-to-triples mapping driven by the shipped mapping table."""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable
from urllib.parse import quote

from ..property_model import QclDeviceRecord, Quantity, validate_record
from .terms import NAMESPACES, RDF_TYPE, Graph, Iri, Literal, Triple, expand_curie

DEFAULT_BASE = "https://example.org/qcl/"
INSTANCE_PREFIX = "qkg"


class MappingGap(KeyError):
    pass


class InvalidBase(ValueError):
    pass


@dataclass(frozen=True)
class MappingRow:
    key: str
    predicate: Iri | None
    object_kind: str
    object: Iri | None
    status: str


@dataclass(frozen=True)
class Mapping:
    version: str
    rows: dict[str, MappingRow]

    def row(self, key: str) -> MappingRow:
        try:
            return self.rows[key]
        except KeyError:
            raise MappingGap(f"mapping table has no entry for {key!r}") from None

    def predicate(self, key: str) -> Iri:
        row = self.row(key)
        if row.predicate is None:
            raise MappingGap(f"{key!r} is a value row, not a predicate row")
        return row.predicate

    def value(self, key: str) -> Iri:
        row = self.row(key)
        if row.object is None:
            raise MappingGap(f"{key!r} has no object IRI")
        return row.object

    def literal(self, key: str, lexical: str) -> Literal:
        return Literal(lexical, self.value(key))

    def predicates(self) -> set[Iri]:
        return {r.predicate for r in self.rows.values() if r.predicate is not None}


def load_mapping(path=None) -> Mapping:
    if path is None:
        text = resources.files("qclkg.kg").joinpath("mapping_v1.tsv").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    version = "unversioned"
    rows = {}
    data_lines = []
    for line in text.splitlines():
        m = re.match(r"#\s*version:\s*(\S+)", line)
        if m:
            version = m.group(1)
        if line.strip() and not line.startswith("#"):
            data_lines.append(line)
    for cells in csv.reader(data_lines, delimiter="\t"):
        if len(cells) != 5:
            raise ValueError(f"mapping row needs 5 columns: {cells}")
        key, pred, kind, obj, status = cells
        if kind not in ("iri", "literal"):
            raise ValueError(f"{key}: object_kind must be iri or literal")
        rows[key] = MappingRow(
            key=key,
            predicate=None if pred == "-" else expand_curie(pred),
            object_kind=kind,
            object=None if obj == "-" else expand_curie(obj),
            status=status,
        )
    return Mapping(version, rows)


def _check_base(base: str) -> None:
    if not base.endswith(("/", "#")):
        raise InvalidBase(f"base IRI must end with '/' or '#': {base!r}")
    Iri(base)


def _seg(text: str) -> str:
    return quote(text, safe="-._~()")


def _slug(label: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", label.lower()).strip("-") or "unnamed"


def article_iri(base: str, doi: str) -> Iri:
    return Iri(base + "article/" + quote(doi.lower(), safe="/-._~()"))


def design_iri(label: str, mapping: Mapping, base: str) -> Iri:
    key = f"value.design.{label}"
    if key in mapping.rows:
        return mapping.value(key)
    return Iri(base + "design/" + _slug(label))


def mint_iris(record: QclDeviceRecord, base: str = DEFAULT_BASE) -> dict[str, Iri]:
    """Deterministic IRIs for every node a record produces."""
    _check_base(base)
    if not record.device_id:
        raise ValueError("device_id is empty")
    dev = _seg(record.device_id)
    iris = {"device": Iri(f"{base}device/{dev}")}
    if record.heterostructure is not None:
        iris["heterostructure"] = Iri(f"{base}hs/{dev}")
    for name in ("temperature", "power", "frequency"):
        if getattr(record, name) is not None:
            iris[name] = Iri(f"{base}quantity/{dev}/{name}")
    if record.doi:
        iris["article"] = article_iri(base, record.doi)
    elif record.url:
        iris["article"] = Iri(f"{base}source/{dev}")
    for i, doi in enumerate(record.cited_dois):
        iris[f"cited{i}"] = article_iri(base, doi)
    return iris


def _quantity_triples(node: Iri, q: Quantity, mapping: Mapping) -> list[Triple]:
    return [
        Triple(node, RDF_TYPE, mapping.value("quantity.class")),
        Triple(node, mapping.predicate("quantity.value"), Literal(repr(q.value), mapping.value("quantity.value"))),
        Triple(node, mapping.predicate("quantity.unit"), mapping.value(f"value.unit.{q.unit.symbol}")),
        Triple(node, mapping.predicate("quantity.kind"), mapping.value(f"value.kind.{q.kind.value}")),
    ]


def record_to_triples(record: QclDeviceRecord, mapping: Mapping, base: str = DEFAULT_BASE) -> set[Triple]:
    problems = validate_record(record)
    if problems:
        raise ValueError(f"record {record.device_id!r} is invalid: " + "; ".join(map(str, problems)))
    m = mapping
    iris = mint_iris(record, base)
    dev = iris["device"]
    out = {
        Triple(dev, RDF_TYPE, m.value("device.class")),
        Triple(dev, m.predicate("device.label"), m.literal("device.label", record.device_id)),
    }
    hs = record.heterostructure
    if hs is not None:
        node = iris["heterostructure"]
        out.add(Triple(dev, m.predicate("device.heterostructure"), node))
        out.add(Triple(node, RDF_TYPE, m.value("heterostructure.class")))
        if hs.mat_formula is not None:
            out.add(Triple(node, RDF_TYPE, m.value("heterostructure.materials_class")))
            out.add(
                Triple(
                    node,
                    m.predicate("heterostructure.mat_formula"),
                    m.literal("heterostructure.mat_formula", hs.mat_formula),
                )
            )
        if hs.design_type is not None:
            label = hs.design_type.label
            d = design_iri(label, m, base)
            out.add(Triple(node, m.predicate("heterostructure.design_type"), d))
            out.add(Triple(d, RDF_TYPE, m.value("design_type.class")))
            out.add(Triple(d, m.predicate("design_type.label"), m.literal("design_type.label", label)))
    if record.working_mode is not None:
        out.add(Triple(dev, m.predicate("device.working_mode"), m.value(f"value.mode.{record.working_mode.value}")))
    for name in ("temperature", "power", "frequency"):
        q = getattr(record, name)
        if q is not None:
            out.add(Triple(dev, m.predicate(f"device.{name}"), iris[name]))
            out.update(_quantity_triples(iris[name], q, m))
    art = iris.get("article")
    if art is not None:
        out.add(Triple(dev, m.predicate("device.source"), art))
        out.add(Triple(art, RDF_TYPE, m.value("article.class")))
        if record.doi:
            out.add(Triple(art, m.predicate("article.doi"), m.literal("article.doi", record.doi)))
        if record.url:
            out.add(Triple(art, m.predicate("article.url"), m.literal("article.url", record.url)))
        for i, doi in enumerate(record.cited_dois):
            cited = iris[f"cited{i}"]
            out.add(Triple(art, m.predicate("article.cites"), cited))
            out.add(Triple(cited, RDF_TYPE, m.value("article.class")))
            out.add(Triple(cited, m.predicate("article.doi"), m.literal("article.doi", doi)))
    return out


def graph_namespaces(base: str) -> tuple[tuple[str, str], ...]:
    return NAMESPACES + ((INSTANCE_PREFIX, base),)


def build_graph(records: Iterable[QclDeviceRecord], mapping: Mapping | None = None, base: str = DEFAULT_BASE) -> Graph:
    mapping = mapping or load_mapping()
    _check_base(base)
    triples: set[Triple] = set()
    seen = set()
    for r in records:
        if r.device_id in seen:
            raise ValueError(f"duplicate device id {r.device_id!r}")
        seen.add(r.device_id)
        triples |= record_to_triples(r, mapping, base)
    return Graph(frozenset(triples), graph_namespaces(base))


__all__ = [
    "DEFAULT_BASE",
    "InvalidBase",
    "Mapping",
    "MappingGap",
    "build_graph",
    "load_mapping",
    "mint_iris",
    "record_to_triples",
]
