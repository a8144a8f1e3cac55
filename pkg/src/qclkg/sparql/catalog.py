"""The competency-question catalog and the suite runner."""

from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ..kg.terms import Graph
from .engine import ResultSet, execute, result_from_srj, row_key
from .parser import SparqlError, parse_query

log = logging.getLogger(__name__)

CQ_CLASSES = tuple(f"CQ{i}" for i in range(1, 8))
_ID_RE = re.compile(r"^([1-7])\.(\d+)$")


class CatalogError(ValueError):
    pass


@dataclass(frozen=True)
class CompetencyQuery:
    query_id: str
    cq_class: str
    sparql_text: str
    question: str = ""
    expected: ResultSet | None = None

    def __post_init__(self):
        m = _ID_RE.match(self.query_id)
        if not m:
            raise CatalogError(f"query id {self.query_id!r} is not of the form '<class>.<n>'")
        if self.cq_class != f"CQ{m.group(1)}":
            raise CatalogError(f"query {self.query_id} is filed under {self.cq_class}")

    @property
    def file_name(self) -> str:
        return "cq" + self.query_id.replace(".", "_") + ".rq"


def _catalog_dir():
    return resources.files("qclkg.sparql").joinpath("catalog")


def load_catalog(catalog_dir=None, expected_dir=None) -> list[CompetencyQuery]:
    """Read the manifest and query texts; attach expectations if a directory is given.

    ``expected_dir`` holds a manifest.json of the form {"expected": {id: file}}
    with SPARQL JSON result files next to it.
    """
    root = _catalog_dir() if catalog_dir is None else Path(catalog_dir)
    manifest = json.loads(root.joinpath("manifest.json").read_text(encoding="utf-8"))
    expected_files = {}
    if expected_dir is not None:
        expected_dir = Path(expected_dir)
        data = json.loads((expected_dir / "manifest.json").read_text(encoding="utf-8"))
        expected_files = data.get("expected", {})
    queries = []
    seen = set()
    for entry in manifest["queries"]:
        qid = entry["id"]
        if qid in seen:
            raise CatalogError(f"duplicate query id {qid}")
        seen.add(qid)
        expected = None
        if qid in expected_files:
            srj = json.loads((expected_dir / expected_files[qid]).read_text(encoding="utf-8"))
            expected = result_from_srj(srj)
        queries.append(
            CompetencyQuery(
                query_id=qid,
                cq_class=entry["class"],
                sparql_text=root.joinpath(entry["file"]).read_text(encoding="utf-8"),
                question=entry.get("question", ""),
                expected=expected,
            )
        )
    unknown = set(expected_files) - seen
    if unknown:
        raise CatalogError(f"expectations for unknown queries: {sorted(unknown)}")
    return queries


def results_equal(actual: ResultSet, expected: ResultSet) -> bool:
    """Same variables and the same multiset of rows, order ignored."""
    if tuple(actual.variables) != tuple(expected.variables):
        return False
    key = lambda r: row_key(r, actual.variables)  # noqa: E731
    return sorted(actual.rows, key=key) == sorted(expected.rows, key=key)


@dataclass(frozen=True)
class QueryStatus:
    query_id: str
    answered: bool
    row_count: int
    matches_expected: bool | None
    error: str = ""
    result: ResultSet | None = None

    def to_json(self) -> dict:
        return {
            "id": self.query_id,
            "answered": self.answered,
            "rowCount": self.row_count,
            "matchesExpected": self.matches_expected,
            "error": self.error,
        }


@dataclass(frozen=True)
class SuiteReport:
    statuses: tuple[QueryStatus, ...]

    @property
    def answered(self) -> int:
        return sum(s.answered for s in self.statuses)

    @property
    def with_expectations(self) -> int:
        return sum(s.matches_expected is not None for s in self.statuses)

    @property
    def matched(self) -> int:
        return sum(s.matches_expected is True for s in self.statuses)

    @property
    def precision(self) -> float | None:
        n = self.with_expectations
        return self.matched / n if n else None

    def status(self, query_id: str) -> QueryStatus:
        for s in self.statuses:
            if s.query_id == query_id:
                return s
        raise KeyError(query_id)

    def to_json(self) -> dict:
        return {
            "answered": self.answered,
            "total": len(self.statuses),
            "withExpectations": self.with_expectations,
            "matched": self.matched,
            "precision": self.precision,
            "queries": [s.to_json() for s in self.statuses],
        }

    def summary(self) -> str:
        lines = [f"{'query':<6} {'answered':<9} {'rows':>5}  expected"]
        for s in self.statuses:
            exp = "-" if s.matches_expected is None else "match" if s.matches_expected else "MISMATCH"
            lines.append(f"{s.query_id:<6} {str(s.answered).lower():<9} {s.row_count:>5}  {exp}")
        prec = "n/a" if self.precision is None else f"{self.precision:.4g}"
        lines.append(f"answered {self.answered}/{len(self.statuses)}, expectations met {self.matched}/"
                     f"{self.with_expectations}, precision {prec}")
        return "\n".join(lines) + "\n"


def run_query(query: CompetencyQuery, graph: Graph) -> QueryStatus:
    try:
        result = execute(parse_query(query.sparql_text), graph)
    except SparqlError as exc:
        log.warning("query %s failed: %s", query.query_id, exc)
        return QueryStatus(query.query_id, False, 0, None if query.expected is None else False, str(exc))
    matches = None if query.expected is None else results_equal(result, query.expected)
    return QueryStatus(query.query_id, True, len(result), matches, result=result)


def run_cq_suite(queries: list[CompetencyQuery], graph: Graph, jobs: int = 1) -> SuiteReport:
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            statuses = list(pool.map(lambda q: run_query(q, graph), queries))
    else:
        statuses = [run_query(q, graph) for q in queries]
    return SuiteReport(tuple(statuses))
