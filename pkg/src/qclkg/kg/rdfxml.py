"""RDF/XML writer (write-only; Turtle is the round-trip format)."""

from __future__ import annotations

import re
from xml.sax.saxutils import escape, quoteattr

from .terms import RDF, Graph, Iri

_NCNAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\-]*$")


class RdfXmlError(ValueError):
    pass


def _split_predicate(iri: str) -> tuple[str, str]:
    m = re.search(r"[A-Za-z_][A-Za-z0-9_.\-]*$", iri)
    if not m or m.start() == 0:
        raise RdfXmlError(f"predicate {iri!r} cannot be written as an XML QName")
    return iri[: m.start()], m.group(0)


def serialize_rdfxml(graph: Graph) -> str:
    prefixes = {"rdf": RDF}
    by_ns: dict[str, str] = {}
    for prefix, ns in graph.namespaces:
        if not _NCNAME.match(prefix) or prefix.lower().startswith("xml"):
            continue
        prefixes.setdefault(prefix, ns)
        by_ns.setdefault(ns, prefix)
    by_ns[RDF] = "rdf"

    def qname(iri: Iri) -> str:
        # prefer a declared namespace whose remainder is a valid local name
        for ns, prefix in sorted(by_ns.items(), key=lambda kv: -len(kv[0])):
            if iri.value.startswith(ns) and _NCNAME.match(iri.value[len(ns) :]):
                return f"{prefix}:{iri.value[len(ns):]}"
        ns, local = _split_predicate(iri.value)
        if ns not in by_ns:
            prefix = f"ns{len([p for p in prefixes if p.startswith('ns')])}"
            while prefix in prefixes:
                prefix += "_"
            prefixes[prefix] = ns
            by_ns[ns] = prefix
        return f"{by_ns[ns]}:{local}"

    body = []
    current = None
    for t in graph.sorted():
        if t.subject != current:
            if current is not None:
                body.append("  </rdf:Description>")
            current = t.subject
            body.append(f"  <rdf:Description rdf:about={quoteattr(t.subject.value)}>")
        name = qname(t.predicate)
        if isinstance(t.object, Iri):
            body.append(f"    <{name} rdf:resource={quoteattr(t.object.value)}/>")
        else:
            lexical = escape(t.object.lexical, {"\r": "&#13;"})
            body.append(f"    <{name} rdf:datatype={quoteattr(t.object.datatype.value)}>{lexical}</{name}>")
    if current is not None:
        body.append("  </rdf:Description>")

    head = ['<?xml version="1.0" encoding="utf-8"?>', "<rdf:RDF"]
    for prefix, ns in prefixes.items():
        head.append(f"  xmlns:{prefix}={quoteattr(ns)}")
    head[-1] += ">"
    return "\n".join(head + body + ["</rdf:RDF>"]) + "\n"
