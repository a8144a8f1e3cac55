"""Parser for the SELECT / basic-graph-pattern / FILTER subset of SPARQL.

Anything outside that subset raises UnsupportedFeature naming the construct,
so a query never silently runs with different semantics.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..kg.terms import RDF_TYPE, XSD_BOOLEAN, XSD_DECIMAL, XSD_DOUBLE, XSD_INTEGER, XSD_STRING, Iri, Literal, TermError

FUNCTION_NS = "urn:qclkg:fn#"
CONVERT = Iri(FUNCTION_NS + "convert")
FUNCTIONS = {CONVERT: 3}

COMPARATORS = ("<=", ">=", "<", ">", "=")

_UNSUPPORTED_KEYWORDS = {
    "OPTIONAL", "UNION", "MINUS", "GRAPH", "SERVICE", "BIND", "VALUES", "ORDER", "GROUP", "HAVING",
    "LIMIT", "OFFSET", "CONSTRUCT", "ASK", "DESCRIBE", "INSERT", "DELETE", "LOAD", "CLEAR", "DROP",
    "CREATE", "ADD", "MOVE", "COPY", "WITH", "FROM", "NAMED", "EXISTS", "NOT", "REDUCED", "BASE",
    "AS", "IN", "UNDEF",
}  # fmt: skip
_BUILTIN_CALLS = {
    "REGEX", "STR", "LANG", "LANGMATCHES", "DATATYPE", "BOUND", "IRI", "URI", "BNODE", "RAND", "ABS",
    "CEIL", "FLOOR", "ROUND", "CONCAT", "STRLEN", "UCASE", "LCASE", "CONTAINS", "STRSTARTS", "STRENDS",
    "COUNT", "SUM", "MIN", "MAX", "AVG", "SAMPLE", "GROUP_CONCAT", "IF", "COALESCE", "ISIRI", "ISURI",
    "ISBLANK", "ISLITERAL", "ISNUMERIC", "SAMETERM", "SUBSTR", "REPLACE", "NOW", "YEAR", "MONTH",
}  # fmt: skip


class SparqlError(ValueError):
    pass


class UnsupportedFeature(SparqlError):
    def __init__(self, feature: str, position: int | None = None):
        self.feature = feature
        self.position = position
        where = f" at offset {position}" if position is not None else ""
        super().__init__(f"unsupported SPARQL feature: {feature}{where}")


class SparqlSyntaxError(SparqlError):
    def __init__(self, message: str, position: int, line: int, column: int):
        self.position = position
        self.line = line
        self.column = column
        super().__init__(f"line {line}, column {column}: {message}")


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return f"?{self.name}"


@dataclass(frozen=True)
class TriplePattern:
    subject: Var | Iri | Literal
    predicate: Var | Iri
    object: Var | Iri | Literal

    def terms(self):
        return (self.subject, self.predicate, self.object)

    def variables(self) -> list[str]:
        return [t.name for t in self.terms() if isinstance(t, Var)]


@dataclass(frozen=True)
class Comparison:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class And:
    parts: tuple


@dataclass(frozen=True)
class Call:
    function: Iri
    args: tuple


@dataclass(frozen=True)
class Filter:
    expr: object

    def variables(self) -> set[str]:
        return _expr_vars(self.expr)


def _expr_vars(expr) -> set[str]:
    if isinstance(expr, Var):
        return {expr.name}
    if isinstance(expr, Comparison):
        return _expr_vars(expr.left) | _expr_vars(expr.right)
    if isinstance(expr, And):
        return set().union(*(_expr_vars(p) for p in expr.parts))
    if isinstance(expr, Call):
        return set().union(*(_expr_vars(a) for a in expr.args))
    return set()


@dataclass(frozen=True)
class QueryPlan:
    prefixes: tuple[tuple[str, str], ...]
    variables: tuple[str, ...]
    distinct: bool
    patterns: tuple[TriplePattern, ...]
    filters: tuple[Filter, ...]
    select_all: bool = False


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+|\#[^\n]*)
  | (?P<iri><[^<>"{}|^`\\\x00-\x20]*>)
  | (?P<var>[?$][A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>"(?:[^"\\\n\r]|\\.)*"|'(?:[^'\\\n\r]|\\.)*')
  | (?P<langtag>@[A-Za-z]+(?:-[A-Za-z0-9]+)*)
  | (?P<dtype>\^\^)
  | (?P<number>[+-]?(?:\d+\.\d*[eE][+-]?\d+|\.\d+[eE][+-]?\d+|\d+[eE][+-]?\d+|\d*\.\d+|\d+))
  | (?P<pname>(?:[A-Za-z][A-Za-z0-9_\-.]*[A-Za-z0-9_\-]|[A-Za-z])?:(?:[A-Za-z0-9_](?:[A-Za-z0-9_\-.]*[A-Za-z0-9_\-])?)?)
  | (?P<word>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>&&|\|\||<=|>=|!=|[=<>!])
  | (?P<punct>[{}().;,*/|^+\[\]])
    """,
    re.VERBOSE,
)

_ESC = {"t": "\t", "b": "\b", "n": "\n", "r": "\r", "f": "\f", '"': '"', "'": "'", "\\": "\\"}


@dataclass
class _Tok:
    kind: str
    value: str
    pos: int


def _tokenize(text: str) -> list[_Tok]:
    toks = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise _syntax(text, pos, f"unexpected character {text[pos]!r}")
        kind = m.lastgroup
        value = m.group(0)
        if kind == "iri" and not re.match(r"<[A-Za-z][A-Za-z0-9+.\-]*:", value):
            # not an absolute IRI, so read '<' as an operator (e.g. "?x<5")
            kind, value = "op", text[pos] if text[pos : pos + 2] != "<=" else "<="
        if kind != "ws":
            toks.append(_Tok(kind, value, pos))
        pos += len(value)
    toks.append(_Tok("eof", "", pos))
    return toks


def _syntax(text: str, pos: int, message: str) -> SparqlSyntaxError:
    line = text.count("\n", 0, pos) + 1
    col = pos - (text.rfind("\n", 0, pos) + 1) + 1
    return SparqlSyntaxError(message, pos, line, col)


def _unescape(s: str) -> str:
    return re.sub(r"\\(.)", lambda m: _ESC.get(m.group(1), m.group(0)), s)


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.toks = _tokenize(text)
        self.i = 0
        self.prefixes: dict[str, str] = {}
        self.order: list[str] = []

    def peek(self, offset: int = 0) -> _Tok:
        return self.toks[min(self.i + offset, len(self.toks) - 1)]

    def take(self) -> _Tok:
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Tok | None = None) -> SparqlSyntaxError:
        tok = tok or self.peek()
        return _syntax(self.text, tok.pos, message)

    def keyword(self, tok: _Tok) -> str | None:
        return tok.value.upper() if tok.kind == "word" else None

    def check_unsupported(self, tok: _Tok) -> None:
        kw = self.keyword(tok)
        if kw in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(kw, tok.pos)
        if tok.kind == "op" and tok.value in ("||", "!=", "!"):
            raise UnsupportedFeature(tok.value, tok.pos)
        if tok.kind == "punct" and tok.value in ("[", "]"):
            raise UnsupportedFeature("blank node", tok.pos)
        if tok.kind == "langtag":
            raise UnsupportedFeature("language tag", tok.pos)

    def expect(self, value: str) -> _Tok:
        tok = self.take()
        if tok.value != value and self.keyword(tok) != value:
            self.check_unsupported(tok)
            raise self.error(f"expected {value!r}, found {tok.value or 'end of query'!r}", tok)
        return tok

    def parse(self) -> QueryPlan:
        while self.keyword(self.peek()) == "PREFIX":
            self.take()
            name = self.take()
            if name.kind != "pname" or not name.value.endswith(":"):
                raise self.error("expected a prefix name such as 'ex:'", name)
            iri = self.take()
            if iri.kind != "iri":
                raise self.error("expected an IRI after the prefix name", iri)
            prefix = name.value[:-1]
            if prefix not in self.prefixes:
                self.order.append(prefix)
            self.prefixes[prefix] = iri.value[1:-1]
        tok = self.peek()
        if self.keyword(tok) != "SELECT":
            self.check_unsupported(tok)
            raise self.error("expected SELECT", tok)
        self.take()
        distinct = False
        if self.keyword(self.peek()) == "DISTINCT":
            self.take()
            distinct = True
        variables: list[str] = []
        select_all = False
        if self.peek().value == "*":
            self.take()
            select_all = True
        else:
            while self.peek().kind == "var":
                name = self.take().value[1:]
                if name not in variables:
                    variables.append(name)
            if self.peek().value == "(":
                raise UnsupportedFeature("expression in SELECT", self.peek().pos)
            if not variables:
                self.check_unsupported(self.peek())
                raise self.error("expected '*' or at least one variable")
        if self.keyword(self.peek()) == "WHERE":
            self.take()
        patterns, filters = self.group()
        tok = self.peek()
        if tok.kind != "eof":
            self.check_unsupported(tok)
            raise self.error(f"unexpected {tok.value!r} after the WHERE clause", tok)
        if select_all:
            for p in patterns:
                for v in p.variables():
                    if v not in variables:
                        variables.append(v)
        return QueryPlan(
            prefixes=tuple((p, self.prefixes[p]) for p in self.order),
            variables=tuple(variables),
            distinct=distinct,
            patterns=tuple(patterns),
            filters=tuple(filters),
            select_all=select_all,
        )

    def group(self):
        self.expect("{")
        patterns: list[TriplePattern] = []
        filters: list[Filter] = []
        while True:
            tok = self.peek()
            if tok.value == "}":
                self.take()
                break
            if tok.value == "{":
                raise UnsupportedFeature("nested group pattern", tok.pos)
            if tok.value == ".":
                self.take()
                continue
            if self.keyword(tok) == "FILTER":
                self.take()
                filters.append(self.filter())
                continue
            if tok.kind == "eof":
                raise self.error("unterminated group pattern, expected '}'", tok)
            self.check_unsupported(tok)
            patterns.extend(self.triples())
        return patterns, filters

    def triples(self) -> list[TriplePattern]:
        subj = self.term(position="subject")
        out = []
        while True:
            pred = self.verb()
            while True:
                out.append(TriplePattern(subj, pred, self.term(position="object")))
                if self.peek().value == ",":
                    self.take()
                    continue
                break
            if self.peek().value == ";":
                while self.peek().value == ";":
                    self.take()
                if self.peek().value in (".", "}"):
                    break
                continue
            break
        nxt = self.peek()
        if nxt.value in ("/", "|", "^", "*", "+") or (nxt.kind == "op" and nxt.value == "?"):
            raise UnsupportedFeature("property path", nxt.pos)
        if nxt.value not in (".", "}") and self.keyword(nxt) != "FILTER":
            self.check_unsupported(nxt)
            raise self.error(f"expected '.' or '}}' after a triple pattern, found {nxt.value!r}", nxt)
        return out

    def verb(self):
        tok = self.peek()
        if tok.kind == "word" and tok.value == "a":
            self.take()
            return RDF_TYPE
        if tok.value == "^":
            raise UnsupportedFeature("property path", tok.pos)
        term = self.term(position="predicate")
        if isinstance(term, Literal):
            raise self.error("a literal cannot be a predicate", tok)
        nxt = self.peek()
        if nxt.value in ("/", "|", "*", "+") or (nxt.kind == "punct" and nxt.value == "^"):
            raise UnsupportedFeature("property path", nxt.pos)
        return term

    def iri_from(self, tok: _Tok) -> Iri:
        try:
            if tok.kind == "iri":
                return Iri(tok.value[1:-1])
            prefix, _, local = tok.value.partition(":")
            if prefix not in self.prefixes:
                raise self.error(f"undeclared prefix {prefix!r}", tok)
            return Iri(self.prefixes[prefix] + local)
        except TermError as exc:
            raise self.error(str(exc), tok) from None

    def term(self, position: str):
        tok = self.take()
        if tok.kind == "var":
            return Var(tok.value[1:])
        if tok.kind in ("iri", "pname"):
            return self.iri_from(tok)
        if tok.kind == "punct" and tok.value in ("[", "("):
            raise UnsupportedFeature("blank node" if tok.value == "[" else "collection", tok.pos)
        if tok.kind == "pname" or (tok.kind == "word" and tok.value.startswith("_")):
            raise UnsupportedFeature("blank node", tok.pos)
        if tok.kind in ("string", "number") or (tok.kind == "word" and tok.value in ("true", "false")):
            self.i -= 1
            return self.literal()
        self.check_unsupported(tok)
        raise self.error(f"expected the {position}, found {tok.value or 'end of query'!r}", tok)

    def literal(self) -> Literal:
        tok = self.take()
        try:
            if tok.kind == "string":
                lexical = _unescape(tok.value[1:-1])
                if self.peek().kind == "dtype":
                    self.take()
                    dt = self.take()
                    if dt.kind not in ("iri", "pname"):
                        raise self.error("expected a datatype IRI", dt)
                    return Literal(lexical, self.iri_from(dt))
                if self.peek().kind == "langtag":
                    raise UnsupportedFeature("language tag", self.peek().pos)
                return Literal(lexical, XSD_STRING)
            if tok.kind == "number":
                v = tok.value
                dt = XSD_DOUBLE if ("e" in v or "E" in v) else XSD_DECIMAL if "." in v else XSD_INTEGER
                return Literal(v, dt)
            if tok.kind == "word" and tok.value in ("true", "false"):
                return Literal(tok.value, XSD_BOOLEAN)
        except TermError as exc:
            raise self.error(str(exc), tok) from None
        raise self.error(f"expected a literal, found {tok.value!r}", tok)

    def filter(self) -> Filter:
        tok = self.peek()
        if tok.value != "(":
            kw = self.keyword(tok)
            if kw in _BUILTIN_CALLS or kw in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedFeature(kw, tok.pos)
            raise self.error("expected '(' after FILTER", tok)
        self.take()
        expr = self.expr()
        self.expect(")")
        return Filter(expr)

    def expr(self):
        parts = [self.relational()]
        while self.peek().value in ("&&", "||"):
            if self.peek().value == "||":
                raise UnsupportedFeature("||", self.peek().pos)
            self.take()
            parts.append(self.relational())
        return parts[0] if len(parts) == 1 else And(tuple(parts))

    def relational(self):
        left = self.primary()
        tok = self.peek()
        if tok.kind == "op" and tok.value in COMPARATORS:
            self.take()
            return Comparison(tok.value, left, self.primary())
        if tok.kind == "op" and tok.value == "!=":
            raise UnsupportedFeature("!=", tok.pos)
        if isinstance(left, (Comparison, And)):
            return left
        raise self.error("expected a comparison operator", tok)

    def primary(self):
        tok = self.peek()
        if tok.value == "(":
            self.take()
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "op" and tok.value in ("!", "-", "+"):
            raise UnsupportedFeature(tok.value, tok.pos)
        if tok.kind == "var":
            self.take()
            return Var(tok.value[1:])
        kw = self.keyword(tok)
        if kw in _BUILTIN_CALLS:
            raise UnsupportedFeature(kw, tok.pos)
        if kw in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedFeature(kw, tok.pos)
        if tok.kind in ("iri", "pname"):
            self.take()
            iri = self.iri_from(tok)
            if self.peek().value == "(":
                return self.call(iri, tok)
            return iri
        if tok.kind in ("string", "number") or (tok.kind == "word" and tok.value in ("true", "false")):
            return self.literal()
        raise self.error(f"unexpected {tok.value or 'end of query'!r} in FILTER", tok)

    def call(self, function: Iri, tok: _Tok) -> Call:
        if function not in FUNCTIONS:
            raise UnsupportedFeature(f"function <{function.value}>", tok.pos)
        self.expect("(")
        args = []
        if self.peek().value != ")":
            args.append(self.primary())
            while self.peek().value == ",":
                self.take()
                args.append(self.primary())
        self.expect(")")
        if len(args) != FUNCTIONS[function]:
            raise self.error(f"<{function.value}> takes {FUNCTIONS[function]} arguments, got {len(args)}", tok)
        return Call(function, tuple(args))


def parse_query(text: str) -> QueryPlan:
    if not text or not text.strip():
        raise SparqlSyntaxError("empty query", 0, 1, 1)
    return _Parser(text).parse()
