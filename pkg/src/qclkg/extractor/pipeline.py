"""Retrieve examples, prompt the backend, parse, and post-process per source text."""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from ..corpus import AbstractDoc
from ..property_model import PropertyClass, QclDeviceRecord, RecordFragment
from ..retrieval import Embedder, EmbeddingIndex, query_text, top_k
from .backends import BackendFailure, GenerationBackend, TokenBucket
from .prompts import (
    DEFAULT_INSTRUCTION,
    DEFAULT_TEMPLATE,
    PROPERTY_INSTRUCTIONS,
    GeneratedPrompt,
    PromptTemplate,
    build_prompt,
)
from .response import ParseFailure, RawResponse, parse_response

log = logging.getLogger(__name__)


class UnknownSource(LookupError):
    pass


@dataclass(frozen=True)
class SourceText:
    source_id: str
    text: str
    instruction: str | None = None


def sources_from_docs(docs: Iterable[AbstractDoc]) -> list[SourceText]:
    return [SourceText(d.doc_id, d.text) for d in docs]


@dataclass(frozen=True)
class AuditEntry:
    source_id: str
    prompt: GeneratedPrompt
    response: RawResponse | None
    status: str
    error: str | None = None

    def to_json(self) -> dict:
        return {
            "source_id": self.source_id,
            "prompt_ref": self.prompt.ref,
            "k": self.prompt.k,
            "example_ids": list(self.prompt.example_ids),
            "target": self.prompt.target.value if self.prompt.target else None,
            "prompt": self.prompt.text,
            "backend": self.response.backend if self.response else None,
            "response_ref": self.response.ref if self.response else None,
            "response": self.response.text if self.response else None,
            "status": self.status,
            "error": self.error,
        }


@dataclass(frozen=True)
class Candidate:
    """One source text's extraction, before post-processing."""

    record: QclDeviceRecord
    fragment: RecordFragment
    status: str  # "ok" | "incomplete" | "unparsed"
    prompt_refs: tuple[str, ...]
    response_refs: tuple[str, ...]


@dataclass(frozen=True)
class ExtractionFailure:
    source_id: str
    kind: str  # "backend" | "parse"
    message: str


@dataclass
class ExtractionRun:
    candidates: list[Candidate] = field(default_factory=list)
    failures: list[ExtractionFailure] = field(default_factory=list)
    audit: list[AuditEntry] = field(default_factory=list)

    @property
    def records(self) -> list[QclDeviceRecord]:
        return [c.record for c in self.candidates]

    def fragments(self) -> dict[str, RecordFragment | None]:
        """source_id -> parsed fragment, None where the response was unusable."""
        out: dict[str, RecordFragment | None] = {f.source_id: None for f in self.failures}
        for c in self.candidates:
            out[c.record.device_id] = None if c.status == "unparsed" else c.fragment
        return out

    def write_audit(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for entry in self.audit:
                fh.write(json.dumps(entry.to_json(), ensure_ascii=False, sort_keys=True) + "\n")


def _merge(fragments: Sequence[RecordFragment]) -> RecordFragment:
    values = {}
    raw = {}
    for frag in fragments:
        raw.update(frag.raw)
        for name in ("temperature", "power", "frequency", "design_type", "mat_formula", "working_mode"):
            value = getattr(frag, name)
            if value is not None and name not in values:
                values[name] = value
    return RecordFragment(**values, raw=raw)


@dataclass(frozen=True)
class _Outcome:
    candidate: Candidate | None
    failure: ExtractionFailure | None
    audit: tuple[AuditEntry, ...]


def _examples_for(query: str, index, embedder, k, property_class):
    if k == 0 or index is None:
        return []
    hits = top_k(index, embedder.embed(query), k, property_class=property_class)
    return [h.sample for h in hits]


def _extract_one(
    source: SourceText,
    index: EmbeddingIndex | None,
    embedder: Embedder | None,
    backend: GenerationBackend,
    template: PromptTemplate,
    k: int,
    per_property: bool,
    class_filter: bool,
    limiter: TokenBucket | None,
) -> _Outcome:
    if per_property:
        tasks = [(PROPERTY_INSTRUCTIONS[p], p) for p in PropertyClass]
    else:
        tasks = [(source.instruction or DEFAULT_INSTRUCTION, None)]
    audit = []
    fragments = []
    unparsed = False
    for instruction, target in tasks:
        examples = _examples_for(
            query_text(instruction, source.text), index, embedder, k, target if class_filter else None
        )
        prompt = build_prompt(template, instruction, source.text, examples, target=target)
        if limiter is not None:
            limiter.acquire()
        try:
            text = backend.generate(prompt)
        except BackendFailure as exc:
            audit.append(AuditEntry(source.source_id, prompt, None, "backend-failure", str(exc)))
            return _Outcome(None, ExtractionFailure(source.source_id, "backend", str(exc)), tuple(audit))
        raw = RawResponse(text, backend.name, prompt.ref)
        try:
            fragments.append(parse_response(raw))
            audit.append(AuditEntry(source.source_id, prompt, raw, "parsed"))
        except ParseFailure as exc:
            unparsed = True
            audit.append(AuditEntry(source.source_id, prompt, raw, "parse-failure", str(exc)))
    fragment = _merge(fragments)
    if unparsed and fragment.is_empty:
        status = "unparsed"
    else:
        status = "incomplete" if fragment.is_empty else "ok"
    candidate = Candidate(
        record=QclDeviceRecord.from_fragment(source.source_id, fragment),
        fragment=fragment,
        status=status,
        prompt_refs=tuple(a.prompt.ref for a in audit),
        response_refs=tuple(a.response.ref for a in audit if a.response),
    )
    failure = ExtractionFailure(source.source_id, "parse", audit[-1].error) if status == "unparsed" else None
    return _Outcome(candidate, failure, tuple(audit))


def extract_properties(
    sources: Sequence[SourceText],
    index: EmbeddingIndex | None,
    embedder: Embedder | None,
    backend: GenerationBackend,
    template: PromptTemplate = DEFAULT_TEMPLATE,
    k: int = 3,
    *,
    per_property: bool = False,
    class_filter: bool = False,
    jobs: int = 1,
    rate_limiter: TokenBucket | None = None,
) -> ExtractionRun:
    """Run the retrieve-prompt-generate-parse loop over every source text.

    Backend failures are recorded and the run moves on to the next text.
    Results are collected in input order whatever ``jobs`` is.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    if k > 0 and (index is None or embedder is None):
        raise ValueError("retrieval with k > 0 needs an index and an embedder")
    if index is not None and embedder is not None and index.embedder_name != embedder.name:
        raise ValueError(f"index was built with {index.embedder_name!r}, not {embedder.name!r}")
    ids = [s.source_id for s in sources]
    if len(set(ids)) != len(ids):
        raise ValueError("source ids must be unique")

    def work(src):
        return _extract_one(src, index, embedder, backend, template, k, per_property, class_filter, rate_limiter)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(work, sources))
    else:
        outcomes = [work(s) for s in sources]

    run = ExtractionRun()
    for out in outcomes:
        run.audit.extend(out.audit)
        if out.candidate is not None:
            run.candidates.append(out.candidate)
        if out.failure is not None:
            log.warning("%s: %s failure: %s", out.failure.source_id, out.failure.kind, out.failure.message)
            run.failures.append(out.failure)
    return run


def post_process(records: Iterable[QclDeviceRecord], docs: Iterable[AbstractDoc]) -> list[QclDeviceRecord]:
    """Drop records without any property and attach source provenance.

    Records are matched to documents by ``device_id == doc_id``.
    """
    by_id = {d.doc_id: d for d in docs}
    out = []
    for r in records:
        doc = by_id.get(r.device_id)
        if doc is None:
            raise UnknownSource(f"no source document for record {r.device_id!r}")
        if not r.has_properties():
            log.info("dropping incomplete record %s", r.device_id)
            continue
        out.append(
            QclDeviceRecord(
                device_id=r.device_id,
                heterostructure=r.heterostructure,
                working_mode=r.working_mode,
                temperature=r.temperature,
                power=r.power,
                frequency=r.frequency,
                doi=doc.doi,
                url=doc.url or None,
                cited_dois=doc.cited_dois,
            )
        )
    out.sort(key=lambda r: r.device_id)
    return out
