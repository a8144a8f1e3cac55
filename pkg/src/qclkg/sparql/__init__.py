"""A small SPARQL SELECT subset and the competency-question suite."""

from .catalog import CompetencyQuery, QueryStatus, SuiteReport, load_catalog, results_equal, run_cq_suite
from .engine import ResultSet, execute, result_from_srj
from .parser import QueryPlan, SparqlError, SparqlSyntaxError, UnsupportedFeature, parse_query

__all__ = [
    "CompetencyQuery",
    "QueryPlan",
    "QueryStatus",
    "ResultSet",
    "SparqlError",
    "SparqlSyntaxError",
    "SuiteReport",
    "UnsupportedFeature",
    "execute",
    "load_catalog",
    "parse_query",
    "result_from_srj",
    "results_equal",
    "run_cq_suite",
]
