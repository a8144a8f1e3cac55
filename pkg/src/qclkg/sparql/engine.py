"""Backtracking evaluator for parsed query plans over an in-memory Graph."""

from __future__ import annotations

import json
import operator
from collections import defaultdict
from dataclasses import dataclass

from ..kg.build import load_mapping
from ..kg.terms import XSD_STRING, Graph, Iri, Literal
from ..property_model import UNIT_BY_SYMBOL, QuantityError, convert
from .parser import CONVERT, And, Call, Comparison, Filter, QueryPlan, TriplePattern, Var, parse_query

_ORDER_OPS = {"<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge}


class QueryError(RuntimeError):
    pass


class _EvalError(Exception):
    """A FILTER expression error; the enclosing filter evaluates to false."""


@dataclass(frozen=True)
class ResultSet:
    variables: tuple[str, ...]
    rows: tuple[dict, ...]

    def __len__(self) -> int:
        return len(self.rows)

    def values(self, var: str) -> list:
        return [row.get(var) for row in self.rows]

    def as_tuples(self) -> list[tuple]:
        return [tuple(row.get(v) for v in self.variables) for row in self.rows]

    def to_srj(self) -> dict:
        bindings = []
        for row in self.rows:
            b = {}
            for var in self.variables:
                term = row.get(var)
                if isinstance(term, Iri):
                    b[var] = {"type": "uri", "value": term.value}
                elif isinstance(term, Literal):
                    b[var] = {"type": "literal", "value": term.lexical, "datatype": term.datatype.value}
            bindings.append(b)
        return {"head": {"vars": list(self.variables)}, "results": {"bindings": bindings}}

    def dumps(self) -> str:
        return json.dumps(self.to_srj(), indent=2, sort_keys=True) + "\n"

    def to_table(self) -> str:
        lines = ["\t".join(self.variables)]
        for row in self.rows:
            cells = []
            for var in self.variables:
                term = row.get(var)
                cells.append("" if term is None else term.value if isinstance(term, Iri) else term.lexical)
            lines.append("\t".join(cells))
        return "\n".join(lines) + "\n"


def result_from_srj(data: dict) -> ResultSet:
    variables = tuple(data["head"]["vars"])
    rows = []
    for b in data["results"]["bindings"]:
        row = {}
        for var, cell in b.items():
            if cell["type"] == "uri":
                row[var] = Iri(cell["value"])
            elif cell["type"] in ("literal", "typed-literal"):
                row[var] = Literal(cell["value"], Iri(cell.get("datatype", XSD_STRING.value)))
            else:
                raise ValueError(f"unsupported binding type {cell['type']!r}")
        rows.append(row)
    return ResultSet(variables, tuple(rows))


def row_key(row: dict, variables) -> tuple:
    return tuple((0,) if row.get(v) is None else (1,) + row[v].sort_key() for v in variables)


class _Index:
    def __init__(self, graph: Graph):
        self.spo = defaultdict(lambda: defaultdict(set))
        self.pos = defaultdict(lambda: defaultdict(set))
        self.osp = defaultdict(lambda: defaultdict(set))
        for s, p, o in graph.triples:
            self.spo[s][p].add(o)
            self.pos[p][o].add(s)
            self.osp[o][s].add(p)
        self.triples = graph.triples

    def match(self, s, p, o):
        """Yield (s, p, o) triples; None means unbound."""
        if s is not None:
            preds = self.spo.get(s, {})
            for pp in [p] if p is not None else preds:
                objs = preds.get(pp, ())
                if o is not None:
                    if o in objs:
                        yield s, pp, o
                else:
                    for oo in objs:
                        yield s, pp, oo
        elif p is not None:
            by_o = self.pos.get(p, {})
            for oo in [o] if o is not None else by_o:
                for ss in by_o.get(oo, ()):
                    yield ss, p, oo
        elif o is not None:
            for ss, preds in self.osp.get(o, {}).items():
                for pp in preds:
                    yield ss, pp, o
        else:
            for t in self.triples:
                yield t.subject, t.predicate, t.object


def _unit_table() -> dict[Iri, object]:
    m = load_mapping()
    return {m.value(f"value.unit.{sym}"): unit for sym, unit in UNIT_BY_SYMBOL.items()}


_UNITS: dict | None = None


def _units() -> dict:
    global _UNITS
    if _UNITS is None:
        _UNITS = _unit_table()
    return _UNITS


def _value(expr, binding: dict):
    if isinstance(expr, Var):
        if expr.name not in binding:
            raise _EvalError(f"unbound variable ?{expr.name}")
        return binding[expr.name]
    if isinstance(expr, (Iri, Literal)):
        return expr
    if isinstance(expr, Call):
        return _call(expr, binding)
    if isinstance(expr, (Comparison, And)):
        return _truth(expr, binding)
    raise _EvalError(f"cannot evaluate {expr!r}")


def _numeric(v):
    if isinstance(v, bool):
        raise _EvalError("boolean is not numeric")
    if isinstance(v, float):
        return v
    if isinstance(v, Literal) and v.is_numeric:
        return v.numeric_value()
    raise _EvalError(f"{v} is not numeric")


def _call(call: Call, binding: dict) -> float:
    if call.function == CONVERT:
        value = _numeric(_value(call.args[0], binding))
        unit, target = (_value(a, binding) for a in call.args[1:])
        units = _units()
        if unit not in units or target not in units:
            raise _EvalError("unknown unit")
        try:
            return convert(value, units[unit], units[target])
        except QuantityError as exc:
            raise _EvalError(str(exc)) from None
    raise _EvalError(f"unknown function {call.function}")


def _is_num(v) -> bool:
    return isinstance(v, float) or (isinstance(v, Literal) and v.is_numeric)


def _truth(expr, binding: dict) -> bool:
    if isinstance(expr, And):
        # an error in any conjunct makes the filter fail, as does false
        return all(_truth(p, binding) for p in expr.parts)
    if isinstance(expr, Comparison):
        left = _value(expr.left, binding)
        right = _value(expr.right, binding)
        if expr.op == "=":
            if _is_num(left) and _is_num(right):
                return _numeric(left) == _numeric(right)
            if isinstance(left, bool) or isinstance(right, bool):
                return left is right
            return left == right
        if _is_num(left) and _is_num(right):
            return _ORDER_OPS[expr.op](_numeric(left), _numeric(right))
        if (
            isinstance(left, Literal)
            and isinstance(right, Literal)
            and left.datatype == right.datatype == XSD_STRING
        ):
            return _ORDER_OPS[expr.op](left.lexical, right.lexical)
        raise _EvalError(f"cannot order {left} and {right}")
    value = _value(expr, binding)
    if isinstance(value, bool):
        return value
    raise _EvalError("filter expression is not boolean")


def filter_passes(flt: Filter, binding: dict) -> bool:
    try:
        return _truth(flt.expr, binding)
    except _EvalError:
        return False


def _resolve(term, binding):
    if isinstance(term, Var):
        return binding.get(term.name)
    return term


def _extend(pattern: TriplePattern, triple, binding: dict) -> dict | None:
    out = dict(binding)
    for slot, value in zip(pattern.terms(), triple):
        if isinstance(slot, Var):
            bound = out.get(slot.name)
            if bound is None:
                out[slot.name] = value
            elif bound != value:
                return None
    return out


def _bound_count(pattern: TriplePattern, bound: set[str]) -> int:
    return sum(1 for t in pattern.terms() if not isinstance(t, Var) or t.name in bound)


def _solutions(plan: QueryPlan, index: _Index):
    remaining_filters = list(plan.filters)
    filter_vars = [f.variables() for f in remaining_filters]

    def solve(patterns: list[TriplePattern], binding: dict, pending: list[int]):
        if not patterns:
            for i in pending:
                if not filter_passes(remaining_filters[i], binding):
                    return
            yield binding
            return
        bound = set(binding)
        # most-constrained pattern next; ties keep query order
        best = max(range(len(patterns)), key=lambda i: (_bound_count(patterns[i], bound), -i))
        pattern = patterns[best]
        rest = patterns[:best] + patterns[best + 1 :]
        s, p, o = (_resolve(t, binding) for t in pattern.terms())
        for triple in index.match(s, p, o):
            nb = _extend(pattern, triple, binding)
            if nb is None:
                continue
            keys = set(nb)
            ready = [i for i in pending if filter_vars[i] <= keys]
            if any(not filter_passes(remaining_filters[i], nb) for i in ready):
                continue
            yield from solve(rest, nb, [i for i in pending if i not in ready])

    start = list(range(len(remaining_filters)))
    ready = [i for i in start if not filter_vars[i]]
    if any(not filter_passes(remaining_filters[i], {}) for i in ready):
        return
    yield from solve(list(plan.patterns), {}, [i for i in start if i not in ready])


def execute(plan: QueryPlan | str, graph: Graph) -> ResultSet:
    if isinstance(plan, str):
        plan = parse_query(plan)
    index = _Index(graph)
    rows = []
    seen = set()
    for solution in _solutions(plan, index):
        row = {v: solution[v] for v in plan.variables if v in solution}
        if plan.distinct:
            key = tuple(sorted(row.items(), key=lambda kv: kv[0]))
            if key in seen:
                continue
            seen.add(key)
        rows.append(row)
    rows.sort(key=lambda r: row_key(r, plan.variables))
    return ResultSet(plan.variables, tuple(rows))
