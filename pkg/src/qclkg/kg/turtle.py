"""Canonical Turtle writer and a Turtle reader for the blank-node-free subset.

The writer emits prefixes in table order, then one block per subject with
subjects, predicates and objects sorted by full IRI / lexical form, so the
same triple set always gives the same bytes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from .terms import (
    RDF_TYPE,
    XSD_BOOLEAN,
    XSD_DECIMAL,
    XSD_DOUBLE,
    XSD_INTEGER,
    XSD_STRING,
    Graph,
    Iri,
    Literal,
    TermError,
    Triple,
)


class SerializationError(ValueError):
    pass


class ParseError(ValueError):
    def __init__(self, message: str, line: int, column: int):
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


# conservative PN_LOCAL: no escapes needed, no trailing dot
_SAFE_LOCAL = re.compile(r"^[A-Za-z0-9_](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?$")
_PREFIX_NAME = re.compile(r"^[A-Za-z](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?$")

_ESCAPES = {"\\": "\\\\", '"': '\\"', "\n": "\\n", "\r": "\\r", "\t": "\\t", "\b": "\\b", "\f": "\\f"}


def _escape_string(s: str) -> str:
    out = []
    for ch in s:
        if ch in _ESCAPES:
            out.append(_ESCAPES[ch])
        elif ord(ch) < 0x20 or ord(ch) == 0x7F:
            out.append(f"\\u{ord(ch):04X}")
        else:
            out.append(ch)
    return "".join(out)


class _Namer:
    def __init__(self, namespaces):
        for prefix, _ in namespaces:
            if not _PREFIX_NAME.match(prefix):
                raise SerializationError(f"invalid prefix name {prefix!r}")
        # longest namespace first so the most specific prefix wins
        self.namespaces = sorted(namespaces, key=lambda pn: -len(pn[1]))

    def iri(self, iri: Iri) -> str:
        for prefix, ns in self.namespaces:
            if iri.value.startswith(ns):
                local = iri.value[len(ns) :]
                if _SAFE_LOCAL.match(local):
                    return f"{prefix}:{local}"
        return f"<{iri.value}>"

    def term(self, t) -> str:
        if isinstance(t, Iri):
            return self.iri(t)
        return f'"{_escape_string(t.lexical)}"^^{self.iri(t.datatype)}'


def serialize_turtle(graph: Graph) -> str:
    namer = _Namer(graph.namespaces)
    lines = [f"@prefix {p}: <{ns}> ." for p, ns in graph.namespaces]
    current = None
    block: list[str] = []

    def flush():
        if block:
            lines.append("")
            lines.append(f"{namer.iri(current)}\n    " + " ;\n    ".join(block) + " .")

    for t in graph.sorted():
        if t.subject != current:
            flush()
            current = t.subject
            block = []
        pred = "a" if t.predicate == RDF_TYPE else namer.iri(t.predicate)
        block.append(f"{pred} {namer.term(t.object)}")
    flush()
    return "\n".join(lines) + "\n"


def serialize(graph: Graph, fmt: str = "turtle") -> bytes:
    fmt = fmt.lower()
    if fmt in ("turtle", "ttl"):
        return serialize_turtle(graph).encode("utf-8")
    if fmt in ("rdfxml", "xml", "rdf"):
        from .rdfxml import serialize_rdfxml

        return serialize_rdfxml(graph).encode("utf-8")
    raise SerializationError(f"unknown format {fmt!r}")


@dataclass
class _Token:
    kind: str
    value: str
    line: int
    col: int


_PN_CHARS_BASE = (
    r"A-Za-z\u00C0-\u00D6\u00D8-\u00F6\u00F8-\u02FF\u0370-\u037D\u037F-\u1FFF\u200C-\u200D"
    r"\u2070-\u218F\u2C00-\u2FEF\u3001-\uD7FF\uF900-\uFDCF\uFDF0-\uFFFD"
)
_PN_CHARS = _PN_CHARS_BASE + r"_0-9\-\u00B7\u0300-\u036F\u203F-\u2040"
_PNAME = re.compile(
    rf"(?:[{_PN_CHARS_BASE}](?:[{_PN_CHARS}.]*[{_PN_CHARS}])?)?:"
    rf"(?:(?:[{_PN_CHARS}:]|%[0-9A-Fa-f]{{2}}|\\[_~.\-!$&'()*+,;=/?#@%])"
    rf"(?:(?:[{_PN_CHARS}.:]|%[0-9A-Fa-f]{{2}}|\\[_~.\-!$&'()*+,;=/?#@%])*"
    rf"(?:[{_PN_CHARS}:]|%[0-9A-Fa-f]{{2}}|\\[_~.\-!$&'()*+,;=/?#@%]))?)?"
)
_TOKEN_SPEC = [
    ("WS", re.compile(r"[ \t\r\n]+")),
    ("COMMENT", re.compile(r"#[^\n]*")),
    ("IRIREF", re.compile(r"<([^<>\"{}|^`\\\x00-\x20]*)>")),
    ("LONGSTRING", re.compile(r'"""((?:[^"\\]|\\.|"(?!""))*)"""|\'\'\'((?:[^\'\\]|\\.|\'(?!\'\'))*)\'\'\'', re.DOTALL)),
    ("STRING", re.compile(r'"((?:[^"\\\n\r]|\\.)*)"|\'((?:[^\'\\\n\r]|\\.)*)\'')),
    ("DIRECTIVE", re.compile(r"@(prefix|base)\b")),
    ("LANGTAG", re.compile(r"@[A-Za-z]+(?:-[A-Za-z0-9]+)*")),
    ("DTYPE", re.compile(r"\^\^")),
    ("NUMBER", re.compile(r"[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+)")),
    ("KEYWORD", re.compile(r"(?:PREFIX|BASE)(?=\s)", re.IGNORECASE)),
    ("BOOL", re.compile(r"(?:true|false)(?![\w:\-])")),
    ("A", re.compile(r"a(?=[\s<\"'\[(])")),
    ("BNODE", re.compile(r"_:|\[")),
    ("PNAME", _PNAME),
    ("PUNCT", re.compile(r"[.;,()\]]")),
]

_STRING_ESCAPES = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


def _unescape(s: str, line: int, col: int) -> str:
    out = []
    i = 0
    while i < len(s):
        ch = s[i]
        if ch != "\\":
            out.append(ch)
            i += 1
            continue
        nxt = s[i + 1] if i + 1 < len(s) else ""
        if nxt in _STRING_ESCAPES:
            out.append(_STRING_ESCAPES[nxt])
            i += 2
        elif nxt in ("u", "U"):
            width = 4 if nxt == "u" else 8
            hexdigits = s[i + 2 : i + 2 + width]
            if len(hexdigits) != width or not re.fullmatch(r"[0-9A-Fa-f]+", hexdigits):
                raise ParseError("bad unicode escape", line, col)
            out.append(chr(int(hexdigits, 16)))
            i += 2 + width
        else:
            raise ParseError(f"unknown escape \\{nxt}", line, col)
    return "".join(out)


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos = 0
    line = 1
    line_start = 0
    n = len(text)
    while pos < n:
        for kind, pattern in _TOKEN_SPEC:
            m = pattern.match(text, pos)
            if m and m.end() > pos:
                break
        else:
            raise ParseError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        value = m.group(0)
        col = pos - line_start + 1
        if kind not in ("WS", "COMMENT"):
            tokens.append(_Token(kind, value, line, col))
        newlines = value.count("\n")
        if newlines:
            line += newlines
            line_start = pos + value.rfind("\n") + 1
        pos = m.end()
    tokens.append(_Token("EOF", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.prefix_order: list[str] = []
        self.base: str | None = None
        self.triples: set[Triple] = set()

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def take(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        return ParseError(message, tok.line, tok.col)

    def expect(self, value: str) -> None:
        tok = self.take()
        if tok.value != value:
            raise self.error(f"expected {value!r}, found {tok.value or 'end of input'!r}", tok)

    def parse(self) -> None:
        while self.peek().kind != "EOF":
            tok = self.peek()
            if tok.kind == "DIRECTIVE":
                self.take()
                self.directive(tok.value[1:], sparql_style=False)
            elif tok.kind == "KEYWORD":
                self.take()
                self.directive(tok.value.lower(), sparql_style=True)
            else:
                self.triples_block()

    def directive(self, name: str, sparql_style: bool) -> None:
        if name == "prefix":
            tok = self.take()
            if tok.kind != "PNAME" or not tok.value.endswith(":"):
                raise self.error("expected a prefix name ending in ':'", tok)
            iri = self.take()
            if iri.kind != "IRIREF":
                raise self.error("expected an IRI", iri)
            prefix = tok.value[:-1]
            if prefix not in self.prefixes:
                self.prefix_order.append(prefix)
            self.prefixes[prefix] = self.resolve(iri.value[1:-1], iri)
        else:
            iri = self.take()
            if iri.kind != "IRIREF":
                raise self.error("expected an IRI", iri)
            self.base = self.resolve(iri.value[1:-1], iri)
        if not sparql_style:
            self.expect(".")

    def resolve(self, value: str, tok: _Token) -> str:
        value = _unescape(value, tok.line, tok.col) if "\\" in value else value
        if re.match(r"^[A-Za-z][A-Za-z0-9+.\-]*:", value):
            return value
        if self.base is None:
            raise self.error(f"relative IRI {value!r} without @base", tok)
        return self.base + value

    def iri(self, tok: _Token) -> Iri:
        try:
            if tok.kind == "IRIREF":
                return Iri(self.resolve(tok.value[1:-1], tok))
            if tok.kind == "PNAME":
                prefix, _, local = tok.value.partition(":")
                if prefix not in self.prefixes:
                    raise self.error(f"undeclared prefix {prefix!r}", tok)
                local = re.sub(r"\\(.)", r"\1", local)
                return Iri(self.prefixes[prefix] + local)
        except TermError as exc:
            raise self.error(str(exc), tok) from None
        raise self.error(f"expected an IRI, found {tok.value!r}", tok)

    def subject(self) -> Iri:
        tok = self.take()
        if tok.kind == "BNODE":
            raise self.error("blank nodes are not supported", tok)
        return self.iri(tok)

    def predicate(self) -> Iri:
        tok = self.take()
        if tok.kind == "A":
            return RDF_TYPE
        return self.iri(tok)

    def obj(self):
        tok = self.take()
        if tok.kind in ("IRIREF", "PNAME"):
            return self.iri(tok)
        if tok.kind == "BNODE":
            raise self.error("blank nodes are not supported", tok)
        if tok.kind == "PUNCT" and tok.value == "(":
            raise self.error("collections are not supported", tok)
        try:
            if tok.kind in ("STRING", "LONGSTRING"):
                body = tok.value[3:-3] if tok.kind == "LONGSTRING" else tok.value[1:-1]
                lexical = _unescape(body, tok.line, tok.col)
                nxt = self.peek()
                if nxt.kind == "DTYPE":
                    self.take()
                    return Literal(lexical, self.iri(self.take()))
                if nxt.kind == "LANGTAG":
                    raise self.error("language-tagged literals are not supported", nxt)
                return Literal(lexical, XSD_STRING)
            if tok.kind == "NUMBER":
                v = tok.value
                if "e" in v or "E" in v:
                    return Literal(v, XSD_DOUBLE)
                if "." in v:
                    return Literal(v, XSD_DECIMAL)
                return Literal(v, XSD_INTEGER)
            if tok.kind == "BOOL":
                return Literal(tok.value, XSD_BOOLEAN)
        except TermError as exc:
            raise self.error(str(exc), tok) from None
        raise self.error(f"expected an object, found {tok.value or 'end of input'!r}", tok)

    def triples_block(self) -> None:
        subj = self.subject()
        while True:
            pred = self.predicate()
            while True:
                self.triples.add(Triple(subj, pred, self.obj()))
                if self.peek().value == ",":
                    self.take()
                    continue
                break
            if self.peek().value == ";":
                while self.peek().value == ";":
                    self.take()
                if self.peek().value == ".":
                    break
                continue
            break
        self.expect(".")


def parse_turtle(data: bytes | str) -> Graph:
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    p = _Parser(text)
    p.parse()
    namespaces = tuple((prefix, p.prefixes[prefix]) for prefix in p.prefix_order)
    return Graph(frozenset(p.triples), namespaces)
