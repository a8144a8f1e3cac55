from .build import DEFAULT_BASE, InvalidBase, Mapping, MappingGap, build_graph, load_mapping, mint_iris, record_to_triples
from .rdfxml import serialize_rdfxml
from .shapes import ShapeRule, ShapeViolation, ValidationReport, default_rules, validate_consistency
from .terms import NAMESPACES, Graph, Iri, Literal, Triple
from .turtle import ParseError, SerializationError, parse_turtle, serialize, serialize_turtle
