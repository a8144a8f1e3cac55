"""RDF terms, triples and an immutable set-semantics graph."""

from __future__ import annotations

import math
import re
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Iterator

RDF = "http://www.w3.org/1999/02/22-rdf-syntax-ns#"
XSD = "http://www.w3.org/2001/XMLSchema#"

# prefix table used for every graph this package writes, in output order
NAMESPACES: tuple[tuple[str, str], ...] = (
    ("QpOnto", "https://github.com/DeperiasKerre/qcl_Onto/blob/main/qclontology/version-1.0/qclonto.owl#"),
    ("MDO", "https://w3id.org/mdo/core/"),
    ("BIBO", "https://dcmi.github.io/bibo/#:"),
    ("prov", "http://www.w3.org/ns/prov#"),
    ("RDFS", "http://www.w3.org/2000/01/rdf-schema#"),
    ("QUDT_Properties", "https://qudt.org/schema/qudt/"),
    ("QUDT_Units", "https://qudt.org/vocab/unit/"),
    ("QUDT_QuantityKinds", "https://qudt.org/vocab/quantitykind/"),
    ("rdf", RDF),
    ("xsd", XSD),
)

_IRI_SCHEME = re.compile(r"^[A-Za-z][A-Za-z0-9+.\-]*:")
_IRI_FORBIDDEN = re.compile(r'[\x00-\x20<>"{}|^`\\]')


class TermError(ValueError):
    pass


@dataclass(frozen=True, order=True)
class Iri:
    value: str

    def __post_init__(self):
        if not _IRI_SCHEME.match(self.value):
            raise TermError(f"not an absolute IRI: {self.value!r}")
        if _IRI_FORBIDDEN.search(self.value):
            raise TermError(f"IRI contains a forbidden character: {self.value!r}")

    def sort_key(self):
        return (0, self.value, "")

    def __str__(self) -> str:
        return f"<{self.value}>"


XSD_STRING = Iri(XSD + "string")
XSD_DOUBLE = Iri(XSD + "double")
XSD_DECIMAL = Iri(XSD + "decimal")
XSD_INTEGER = Iri(XSD + "integer")
XSD_BOOLEAN = Iri(XSD + "boolean")
XSD_ANYURI = Iri(XSD + "anyURI")
RDF_TYPE = Iri(RDF + "type")

NUMERIC_DATATYPES = frozenset(
    Iri(XSD + name)
    for name in ("double", "float", "decimal", "integer", "int", "long", "short", "nonNegativeInteger")
)


@dataclass(frozen=True)
class Literal:
    lexical: str
    datatype: Iri = XSD_STRING

    def __post_init__(self):
        if self.datatype in NUMERIC_DATATYPES:
            try:
                v = float(self.lexical)
            except ValueError:
                raise TermError(f"{self.lexical!r} is not a valid {self.datatype.value}") from None
            if not math.isfinite(v):
                raise TermError(f"{self.lexical!r} is not finite")
        elif self.datatype == XSD_ANYURI and re.search(r"\s", self.lexical):
            raise TermError(f"anyURI literal contains whitespace: {self.lexical!r}")
        elif self.datatype == XSD_BOOLEAN and self.lexical not in ("true", "false", "1", "0"):
            raise TermError(f"{self.lexical!r} is not a boolean")

    @property
    def is_numeric(self) -> bool:
        return self.datatype in NUMERIC_DATATYPES

    def numeric_value(self) -> float:
        return float(self.lexical)

    def sort_key(self):
        return (1, self.lexical, self.datatype.value)

    def __str__(self) -> str:
        return f'"{self.lexical}"^^<{self.datatype.value}>'


Term = Iri | Literal


def term_key(term: Term):
    return term.sort_key()


def double(value: float) -> Literal:
    return Literal(repr(float(value)), XSD_DOUBLE)


@dataclass(frozen=True)
class Triple:
    subject: Iri
    predicate: Iri
    object: Term

    def __post_init__(self):
        if not isinstance(self.subject, Iri):
            raise TermError("subject must be an IRI")
        if not isinstance(self.predicate, Iri):
            raise TermError("predicate must be an IRI")
        if not isinstance(self.object, (Iri, Literal)):
            raise TermError("object must be an IRI or a literal")

    def sort_key(self):
        return (self.subject.sort_key(), self.predicate.sort_key(), self.object.sort_key())

    def __iter__(self):
        return iter((self.subject, self.predicate, self.object))


@dataclass(frozen=True)
class Graph:
    triples: frozenset[Triple] = frozenset()
    namespaces: tuple[tuple[str, str], ...] = NAMESPACES
    _by_subject: dict = field(default=None, init=False, repr=False, compare=False, hash=False)
    _by_predicate: dict = field(default=None, init=False, repr=False, compare=False, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "triples", frozenset(self.triples))
        prefixes = [p for p, _ in self.namespaces]
        if len(set(prefixes)) != len(prefixes):
            raise ValueError("namespace prefixes must be unique")

    def __len__(self) -> int:
        return len(self.triples)

    def __iter__(self) -> Iterator[Triple]:
        return iter(self.triples)

    def __contains__(self, t) -> bool:
        return t in self.triples

    def sorted(self) -> list[Triple]:
        return sorted(self.triples, key=Triple.sort_key)

    def _indexes(self):
        if self._by_subject is None:
            by_s = defaultdict(list)
            by_p = defaultdict(list)
            for t in self.triples:
                by_s[t.subject].append(t)
                by_p[t.predicate].append(t)
            object.__setattr__(self, "_by_subject", dict(by_s))
            object.__setattr__(self, "_by_predicate", dict(by_p))
        return self._by_subject, self._by_predicate

    def about(self, subject: Iri) -> list[Triple]:
        return self._indexes()[0].get(subject, [])

    def with_predicate(self, predicate: Iri) -> list[Triple]:
        return self._indexes()[1].get(predicate, [])

    def objects(self, subject: Iri, predicate: Iri) -> list[Term]:
        return [t.object for t in self.about(subject) if t.predicate == predicate]

    def instances(self, cls: Iri) -> set[Iri]:
        return {t.subject for t in self.with_predicate(RDF_TYPE) if t.object == cls}

    def union(self, triples: Iterable[Triple]) -> Graph:
        return Graph(self.triples | frozenset(triples), self.namespaces)

    def without(self, triples: Iterable[Triple]) -> Graph:
        return Graph(self.triples - frozenset(triples), self.namespaces)

    def expand(self, curie: str) -> Iri:
        prefix, _, local = curie.partition(":")
        for p, ns in self.namespaces:
            if p == prefix:
                return Iri(ns + local)
        raise KeyError(f"unknown prefix {prefix!r}")


def expand_curie(curie: str, namespaces=NAMESPACES) -> Iri:
    prefix, sep, local = curie.partition(":")
    if sep:
        for p, ns in namespaces:
            if p == prefix:
                return Iri(ns + local)
    raise KeyError(f"unknown prefix in {curie!r}")
