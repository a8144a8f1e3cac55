import random
from collections import Counter

import pytest
import rdflib
from rdflib.compare import isomorphic

from conftest import FIXTURES
from qclkg.kg import (
    Graph,
    InvalidBase,
    Iri,
    Literal,
    ParseError,
    Triple,
    build_graph,
    load_mapping,
    mint_iris,
    parse_turtle,
    record_to_triples,
    serialize,
    serialize_rdfxml,
    serialize_turtle,
    validate_consistency,
)
from qclkg.kg.rdfxml import RdfXmlError
from qclkg.kg.terms import XSD_ANYURI, XSD_DOUBLE, XSD_STRING, TermError
from qclkg.property_model import (
    DesignType,
    Heterostructure,
    QclDeviceRecord,
    Quantity,
    QuantityKind,
    Unit,
    WorkingMode,
    read_records_csv,
)

# Hand count for one fully populated record with one citation, read off the
# mapping table row by row:
#   device: rdf:type, label                                  2
#   heterostructure: link, 2 x rdf:type, matFormula           4
#   design type: link, rdf:type, label                        3
#   working mode                                              1
#   3 quantities x (link, rdf:type, value, unit, kind)       15
#   source article: link, rdf:type, doi, uri                  4
#   citation: cites, cited rdf:type, cited doi                3
T_FULL = 32

DESIGNS = ("lo phonon", "resonant phonon", "bound to continuum", "hybrid")


def full_record(i, design="lo phonon", cited=("10.5555/ref.001",)):
    return QclDeviceRecord(
        device_id=f"dev-{i}",
        heterostructure=Heterostructure(f"GaAs/Al0.{i % 10}Ga0.{9 - i % 10}As", DesignType(design)),
        working_mode=WorkingMode.PULSED if i % 2 else WorkingMode.CONTINUOUS_WAVE,
        temperature=Quantity(50 + i, Unit.KELVIN, QuantityKind.TEMPERATURE),
        power=Quantity(1 + i, Unit.MILLIWATT if i % 3 else Unit.WATT, QuantityKind.POWER),
        frequency=Quantity(0.5 + i / 10, Unit.TERAHERTZ if i % 4 else Unit.GIGAHERTZ, QuantityKind.FREQUENCY),
        doi=f"10.5555/dev.{i}",
        url=f"https://example.org/a/{i}",
        cited_dois=cited,
    )


def hand_count(r):
    """Triple count for one record derived from the mapping rows, not from the builder."""
    n = 2
    if r.heterostructure is not None:
        n += 2 + (2 if r.mat_formula else 0) + (3 if r.design_type else 0)
    n += 1 if r.working_mode else 0
    n += 5 * sum(q is not None for q in (r.temperature, r.power, r.frequency))
    if r.doi or r.url:
        n += 2 + bool(r.doi) + bool(r.url)
    return n + 3 * len(r.cited_dois)


def union_oracle_count(records):
    """Sum of hand counts minus the nodes that several records share."""
    total = sum(hand_count(r) for r in records)
    designs = Counter(r.design_type.label for r in records if r.design_type)
    cited = Counter(d.lower() for r in records for d in r.cited_dois)
    # shared design node: rdf:type + label; shared cited article: rdf:type + doi
    total -= sum(2 * (c - 1) for c in designs.values())
    total -= sum(2 * (c - 1) for c in cited.values())
    return total


@pytest.fixture(scope="module")
def gold_records():
    with open(FIXTURES / "gold_records.csv", encoding="utf-8") as fh:
        return read_records_csv(fh)


@pytest.fixture(scope="module")
def gold_graph(gold_records):
    return build_graph(gold_records)


def fault_blocks():
    """faults.ttl split into its prefix header and one Turtle snippet per fault."""
    text = (FIXTURES / "faults.ttl").read_text(encoding="utf-8")
    header = "\n".join(line for line in text.splitlines() if line.startswith("@prefix"))
    blocks = []
    for line in text.splitlines():
        if line.startswith("# ") and line[2:3].isdigit():
            blocks.append([])
        elif blocks and not line.startswith("@prefix"):
            blocks[-1].append(line)
    return header, ["\n".join(b) for b in blocks]


def expected_faults():
    lines = (FIXTURES / "faults_expected.tsv").read_text(encoding="utf-8").splitlines()
    rows = [line.split("\t") for line in lines if line and not line.startswith("#")]
    return [tuple(r) for r in rows[1:]]


class TestTriples:
    def test_full_record_count(self):
        m = load_mapping()
        for i in range(10):
            r = full_record(i, DESIGNS[i % 4])
            assert hand_count(r) == T_FULL
            assert len(record_to_triples(r, m)) == T_FULL

    def test_absent_power_gives_no_power_triples(self):
        r = full_record(1)
        r = QclDeviceRecord(**{**r.__dict__, "power": None})
        triples = record_to_triples(r, load_mapping())
        assert len(triples) == T_FULL - 5
        assert not any("/power" in t.subject.value for t in triples)

    def test_pure_and_deterministic(self):
        r = full_record(3)
        assert record_to_triples(r, load_mapping()) == record_to_triples(r, load_mapping())

    def test_invalid_record_rejected(self):
        r = QclDeviceRecord("x", heterostructure=Heterostructure("GaAs", None), doi="10.5555/x")
        with pytest.raises(ValueError, match="invalid"):
            record_to_triples(r, load_mapping())

    def test_no_blank_nodes_and_typed_values(self, gold_graph):
        for t in gold_graph:
            assert isinstance(t.subject, Iri)
            if isinstance(t.object, Literal) and t.predicate.value.endswith("numericValue"):
                assert t.object.datatype == XSD_DOUBLE

    def test_iris(self):
        iris = mint_iris(full_record(2, cited=("10.5555/REF.9",)))
        assert iris["device"].value == "https://example.org/qcl/device/dev-2"
        assert iris["temperature"].value == "https://example.org/qcl/quantity/dev-2/temperature"
        assert iris["cited0"].value == "https://example.org/qcl/article/10.5555/ref.9"

    def test_bad_base(self):
        with pytest.raises(InvalidBase):
            build_graph([full_record(1)], base="https://example.org/qcl")

    def test_duplicate_device(self):
        with pytest.raises(ValueError, match="duplicate"):
            build_graph([full_record(1), full_record(1)])

    def test_known_and_minted_design_nodes(self):
        g = build_graph([full_record(1, "lo phonon"), full_record(2, "hybrid")])
        objects = {t.object.value for t in g if t.predicate.value.endswith("hasDesignType")}
        assert any(o.endswith("#LOPhononDesign") for o in objects)
        assert "https://example.org/qcl/design/hybrid" in objects


class TestGraph:
    def test_gold_fixture_count_matches_union_oracle(self, gold_records, gold_graph):
        assert len(gold_records) == 42
        assert len(gold_graph) == union_oracle_count(gold_records) == 1227

    def test_set_union_of_records(self, gold_records, gold_graph):
        m = load_mapping()
        union = set()
        for r in gold_records:
            union |= record_to_triples(r, m)
        assert gold_graph.triples == frozenset(union)

    def test_synthetic_full_records(self):
        records = [full_record(i, DESIGNS[i % 4], (f"10.5555/ref.{i % 5}",)) for i in range(42)]
        g = build_graph(records)
        assert len(g) == union_oracle_count(records) == 42 * T_FULL - 2 * (42 - 4) - 2 * (42 - 5)

    def test_graph_immutable_and_set_semantics(self):
        t = Triple(Iri("http://x/a"), Iri("http://x/p"), Literal("v"))
        g = Graph(frozenset([t]))
        assert len(g.union([t])) == 1 and len(g.without([t])) == 0 and len(g) == 1

    def test_duplicate_prefix(self):
        with pytest.raises(ValueError):
            Graph(namespaces=(("a", "http://x/"), ("a", "http://y/")))


class TestTerms:
    def test_relative_iri(self):
        with pytest.raises(TermError):
            Iri("device/1")

    def test_bad_numeric_literal(self):
        with pytest.raises(TermError):
            Literal("abc", XSD_DOUBLE)
        with pytest.raises(TermError):
            Literal("nan", XSD_DOUBLE)

    def test_any_uri_whitespace(self):
        with pytest.raises(TermError):
            Literal("a b", XSD_ANYURI)


class TestValidation:
    def test_gold_graph_conforms(self, gold_graph):
        report = validate_consistency(gold_graph)
        assert report.conforms and len(report) == 0

    def test_each_fault_alone_trips_its_rule(self, gold_graph):
        header, blocks = fault_blocks()
        expected = expected_faults()
        assert len(blocks) == len(expected) == 6
        for block, (rule_id, focus) in zip(blocks, expected):
            extra = parse_turtle(header + "\n" + block)
            report = validate_consistency(gold_graph.union(extra))
            assert [(v.rule_id, v.focus.value) for v in report.violations] == [(rule_id, focus)]

    def test_all_faults_together(self, gold_graph):
        extra = parse_turtle((FIXTURES / "faults.ttl").read_bytes())
        report = validate_consistency(gold_graph.union(extra))
        assert sorted((v.rule_id, v.focus.value) for v in report.violations) == sorted(expected_faults())

    def test_fault_removal_restores_conformance(self, gold_graph):
        extra = parse_turtle((FIXTURES / "faults.ttl").read_bytes())
        assert validate_consistency(gold_graph.union(extra).without(extra)).conforms

    def test_report_json(self, gold_graph):
        extra = parse_turtle((FIXTURES / "faults.ttl").read_bytes())
        data = validate_consistency(gold_graph.union(extra)).to_json()
        assert data["conforms"] is False and len(data["violations"]) == 6
        assert set(data["violations"][0]) == {"rule", "focus", "path", "message"}


def random_graph(rng, n):
    chars = ['a', 'Z', '9', ' ', '"', "'", '\\', '\n', '\t', 'é', '漢', '😀', '{', '>', '#', '.', ':']
    ns = ["https://example.org/qcl/", "https://qudt.org/vocab/unit/", "http://other.example/x#", "urn:test:"]
    locals_ = ["a", "b-1", "c.d", "1x", "p/q", "with%20space", "_u", "end.", "a~b", "x(y)"]

    def iri():
        return Iri(rng.choice(ns) + rng.choice(locals_) + str(rng.randint(0, 5)))

    def literal():
        kind = rng.random()
        if kind < 0.4:
            return Literal("".join(rng.choice(chars) for _ in range(rng.randint(0, 8))))
        if kind < 0.7:
            return Literal(repr(rng.uniform(-1e6, 1e6)), XSD_DOUBLE)
        return Literal(f"https://example.org/{rng.randint(0, 99)}", XSD_ANYURI)

    def predicate():
        # RDF/XML needs predicates that end in an XML name
        return Iri(rng.choice(ns) + rng.choice(["p", "has_value", "q.r", "s-t"]))

    triples = set()
    for _ in range(n):
        obj = iri() if rng.random() < 0.5 else literal()
        triples.add(Triple(iri(), predicate(), obj))
    namespaces = (("qkg", ns[0]), ("QUDT_Units", ns[1]), ("o", ns[2]))
    return Graph(frozenset(triples), namespaces)


class TestTurtle:
    def test_round_trip_gold(self, gold_graph):
        text = serialize_turtle(gold_graph)
        again = parse_turtle(text)
        assert again.triples == gold_graph.triples
        assert serialize_turtle(Graph(again.triples, gold_graph.namespaces)) == text

    @pytest.mark.parametrize("seed", range(25))
    def test_random_round_trip(self, seed):
        g = random_graph(random.Random(seed), 40)
        text = serialize_turtle(g)
        back = parse_turtle(text)
        assert back.triples == g.triples
        assert serialize_turtle(Graph(back.triples, g.namespaces)) == text

    def test_rdflib_reads_turtle(self, gold_graph):
        ours = parse_turtle(serialize_turtle(gold_graph))
        theirs = rdflib.Graph().parse(data=serialize_turtle(gold_graph), format="turtle")
        assert len(theirs) == len(ours) == len(gold_graph)
        mirror = rdflib.Graph()
        for t in gold_graph:
            mirror.add(to_rdflib(t))
        assert isomorphic(theirs, mirror)

    def test_rdflib_reads_rdfxml(self, gold_graph):
        theirs = rdflib.Graph().parse(data=serialize_rdfxml(gold_graph), format="xml")
        mirror = rdflib.Graph()
        for t in gold_graph:
            mirror.add(to_rdflib(t))
        assert isomorphic(theirs, mirror)

    @pytest.mark.parametrize("seed", range(5))
    def test_rdflib_agrees_on_random_graphs(self, seed):
        g = random_graph(random.Random(100 + seed), 30)
        mirror = rdflib.Graph()
        for t in g:
            mirror.add(to_rdflib(t))
        assert isomorphic(rdflib.Graph().parse(data=serialize_turtle(g), format="turtle"), mirror)
        assert isomorphic(rdflib.Graph().parse(data=serialize_rdfxml(g), format="xml"), mirror)

    def test_parse_rdflib_output(self, gold_graph):
        mirror = rdflib.Graph()
        for t in gold_graph:
            mirror.add(to_rdflib(t))
        parsed = parse_turtle(mirror.serialize(format="turtle"))

        # rdflib rewrites xsd:double lexicals canonically ("1.6e+02"), so compare values
        def by_value(g):
            return {
                (t.subject, t.predicate, float(t.object.lexical) if t.object.datatype == XSD_DOUBLE else t.object)
                if isinstance(t.object, Literal)
                else tuple(t)
                for t in g
            }

        assert by_value(parsed) == by_value(gold_graph)

    def test_serialize_formats(self, gold_graph):
        assert serialize(gold_graph, "turtle") == serialize_turtle(gold_graph).encode("utf-8")
        assert serialize(gold_graph, "xml").startswith(b"<?xml")
        with pytest.raises(ValueError):
            serialize(gold_graph, "n3")

    def test_rdfxml_rejects_unsplittable_predicate(self):
        g = Graph(frozenset([Triple(Iri("http://x/s"), Iri("http://x/p(1)2"), Literal("v"))]))
        with pytest.raises(RdfXmlError):
            serialize_rdfxml(g)

    def test_parse_error_position(self):
        with pytest.raises(ParseError) as err:
            parse_turtle('@prefix a: <http://x/> .\na:s a:p "unterminated .\n')
        assert err.value.line == 2

    def test_unknown_prefix(self):
        with pytest.raises(ParseError):
            parse_turtle("b:s b:p b:o .")

    def test_blank_nodes_rejected(self):
        with pytest.raises(ParseError):
            parse_turtle("<http://x/s> <http://x/p> _:b0 .")

    def test_string_escapes(self):
        g = parse_turtle(r'<http://x/s> <http://x/p> "a\"b\\c\ndé" .')
        (t,) = g
        assert t.object == Literal('a"b\\c\ndé', XSD_STRING)


def to_rdflib(t):
    def conv(term):
        if isinstance(term, Iri):
            return rdflib.URIRef(term.value)
        return rdflib.Literal(term.lexical, datatype=rdflib.URIRef(term.datatype.value))

    return conv(t.subject), conv(t.predicate), conv(t.object)
