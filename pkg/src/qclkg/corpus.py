"""Loading the instruction dataset and abstract corpus, and splitting samples.

Splits use SplitMix64 feeding a Fisher-Yates shuffle so that any
implementation following the same recipe reproduces the same id lists:

    state += 0x9E3779B97F4A7C15                         (mod 2**64)
    z = (state ^ (state >> 30)) * 0xBF58476D1CE4E5B9   (mod 2**64)
    z = (z ^ (z >> 27)) * 0x94D049BB133111EB           (mod 2**64)
    output z ^ (z >> 31)

    for i = n-1 down to 1: j = next() mod (i+1); swap(ids[i], ids[j])

The shuffled list is then cut into train / test / holdout prefixes.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Iterator, Sequence

from .property_model import (
    DOI_RE,
    DesignType,
    PropertyClass,
    QuantityError,
    RecordFragment,
    parse_quantity,
    parse_working_mode,
)


class SchemaError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class DuplicateDoi(SchemaError):
    pass


class FractionError(ValueError):
    pass


@dataclass(frozen=True)
class InstructionSample:
    sample_id: str
    instruction: str
    sentence: str
    expected: RecordFragment
    property_class: PropertyClass


@dataclass(frozen=True)
class AbstractDoc:
    doc_id: str
    text: str
    doi: str
    url: str = ""
    cited_dois: tuple[str, ...] = ()


@dataclass(frozen=True)
class DatasetSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    holdout_ids: tuple[str, ...]
    seed: int
    train_frac: float
    test_frac: float

    def to_json(self) -> dict:
        return {
            "seed": self.seed,
            "train_frac": self.train_frac,
            "test_frac": self.test_frac,
            "train_ids": list(self.train_ids),
            "test_ids": list(self.test_ids),
            "holdout_ids": list(self.holdout_ids),
        }


def fragment_from_envelope(data: dict, *, strict: bool) -> RecordFragment:
    """Build a fragment from ``{"temperature": "150 K", ...}``.

    With ``strict`` a bad value raises; otherwise the field is left missing
    and its key is reported in the fragment's raw map only.
    """
    values: dict = {}
    raw: dict[str, str] = {}
    for key, value in data.items():
        if value is None:
            continue
        text = value if isinstance(value, str) else json.dumps(value)
        text = text.strip()
        if not text or text.lower() in {"null", "none", "n/a", "-"}:
            continue
        raw[key] = text
        try:
            if key in ("temperature", "power", "frequency"):
                values[key] = parse_quantity(text, PropertyClass(key).quantity_kind)
            elif key == "design_type":
                values[key] = DesignType.from_text(text)
            elif key == "heterostructure":
                if "/" not in text:
                    raise ValueError(f"heterostructure {text!r} has no '/'")
                values["mat_formula"] = " ".join(text.split())
            elif key == "working_mode":
                values[key] = parse_working_mode(text)
        except (QuantityError, ValueError):
            if strict:
                raise
    return RecordFragment(**values, raw=raw)


def _iter_json_lines(path: Path) -> Iterator[tuple[int, dict]]:
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"invalid JSON: {exc.msg}", lineno) from None
            if not isinstance(obj, dict):
                raise SchemaError("expected a JSON object", lineno)
            yield lineno, obj


def _require_text(obj: dict, key: str, lineno: int) -> str:
    value = obj.get(key)
    if not isinstance(value, str) or not value.strip():
        raise SchemaError(f"missing or empty {key!r}", lineno)
    return value


def sample_from_json(obj: dict, lineno: int) -> InstructionSample:
    instruction = _require_text(obj, "instruction", lineno)
    sentence = _require_text(obj, "sentence", lineno)
    try:
        prop = PropertyClass(_require_text(obj, "property_class", lineno))
    except ValueError:
        raise SchemaError(f"unknown property_class {obj.get('property_class')!r}", lineno) from None
    expected = obj.get("expected")
    if not isinstance(expected, dict):
        raise SchemaError("missing 'expected' object", lineno)
    try:
        frag = fragment_from_envelope(expected, strict=True)
    except ValueError as exc:
        raise SchemaError(f"bad expected value: {exc}", lineno) from None
    present = frag.present_classes()
    if present != {prop}:
        names = sorted(p.value for p in present)
        raise SchemaError(f"property_class {prop.value!r} does not match expected fields {names}", lineno)
    sample_id = str(obj.get("id") or f"L{lineno:05d}")
    return InstructionSample(sample_id, instruction, sentence, frag, prop)


def load_instruction_dataset(path) -> list[InstructionSample]:
    samples = []
    seen = set()
    for lineno, obj in _iter_json_lines(Path(path)):
        sample = sample_from_json(obj, lineno)
        if sample.sample_id in seen:
            raise SchemaError(f"duplicate id {sample.sample_id!r}", lineno)
        seen.add(sample.sample_id)
        samples.append(sample)
    return samples


def sample_to_json(sample: InstructionSample) -> dict:
    cls = sample.property_class
    value = sample.expected.raw.get(cls.value) or sample.expected.to_envelope()[cls.value]
    return {
        "id": sample.sample_id,
        "instruction": sample.instruction,
        "sentence": sample.sentence,
        "expected": {cls.value: value},
        "property_class": cls.value,
    }


def dump_instruction_dataset(samples: Iterable[InstructionSample], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for s in samples:
            fh.write(json.dumps(sample_to_json(s), ensure_ascii=False) + "\n")


def load_abstract_corpus(path) -> list[AbstractDoc]:
    docs = []
    dois: dict[str, int] = {}
    ids = set()
    for lineno, obj in _iter_json_lines(Path(path)):
        text = _require_text(obj, "text", lineno)
        doi = _require_text(obj, "doi", lineno).strip()
        if not DOI_RE.match(doi):
            raise SchemaError(f"malformed doi {doi!r}", lineno)
        key = doi.lower()
        if key in dois:
            raise DuplicateDoi(f"doi {doi!r} already used on line {dois[key]}", lineno)
        dois[key] = lineno
        cited = obj.get("cited_dois", [])
        if not isinstance(cited, list) or not all(isinstance(c, str) for c in cited):
            raise SchemaError("'cited_dois' must be a list of strings", lineno)
        url = obj.get("url") or ""
        if not isinstance(url, str):
            raise SchemaError("'url' must be a string", lineno)
        doc_id = str(obj.get("id") or f"L{lineno:05d}")
        if doc_id in ids:
            raise SchemaError(f"duplicate id {doc_id!r}", lineno)
        ids.add(doc_id)
        docs.append(AbstractDoc(doc_id, text, doi, url, tuple(c.strip() for c in cited)))
    return docs


def dump_abstract_corpus(docs: Iterable[AbstractDoc], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for d in docs:
            obj = {"id": d.doc_id, "text": d.text, "doi": d.doi, "url": d.url, "cited_dois": list(d.cited_dois)}
            fh.write(json.dumps(obj, ensure_ascii=False) + "\n")


_MASK64 = (1 << 64) - 1


class SplitMix64:
    def __init__(self, seed: int):
        if not 0 <= seed <= _MASK64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        self.state = seed

    def next(self) -> int:
        self.state = (self.state + 0x9E3779B97F4A7C15) & _MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)


def shuffled(items: Sequence, seed: int) -> list:
    out = list(items)
    rng = SplitMix64(seed)
    for i in range(len(out) - 1, 0, -1):
        j = rng.next() % (i + 1)
        out[i], out[j] = out[j], out[i]
    return out


def _exact(frac: float) -> Fraction:
    # 0.8 means 4/5 here, not the nearest binary double
    return Fraction(repr(float(frac)))


def split_dataset(samples: Sequence, seed: int, train_frac: float = 0.8, test_frac: float = 0.1) -> DatasetSplit:
    """Seeded shuffle, then prefix assignment: train, test, and the rest as holdout."""
    tf, sf = _exact(train_frac), _exact(test_frac)
    if tf < 0 or sf < 0:
        raise FractionError("fractions must be non-negative")
    if tf + sf > 1:
        raise FractionError(f"train_frac + test_frac = {float(tf + sf)} > 1")
    ids = [s if isinstance(s, str) else s.sample_id for s in samples]
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    order = shuffled(ids, seed)
    n_train = math.floor(tf * len(ids))
    n_test = math.floor(sf * len(ids))
    return DatasetSplit(
        train_ids=tuple(order[:n_train]),
        test_ids=tuple(order[n_train : n_train + n_test]),
        holdout_ids=tuple(order[n_train + n_test :]),
        seed=seed,
        train_frac=train_frac,
        test_frac=test_frac,
    )


def select(samples: Iterable[InstructionSample], ids: Iterable[str]) -> list[InstructionSample]:
    by_id = {s.sample_id: s for s in samples}
    return [by_id[i] for i in ids]
