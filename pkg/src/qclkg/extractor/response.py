from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass

from ..corpus import fragment_from_envelope
from ..property_model import RecordFragment
from .prompts import ENVELOPE_KEYS


class ParseFailure(ValueError):
    pass


@dataclass(frozen=True)
class RawResponse:
    text: str
    backend: str
    prompt_ref: str

    @property
    def ref(self) -> str:
        digest = hashlib.sha256(f"{self.prompt_ref}\x00{self.backend}\x00{self.text}".encode("utf-8"))
        return "r-" + digest.hexdigest()[:16]


_FENCE_RE = re.compile(r"```(?:json)?\s*(.*?)```", re.DOTALL)


def _first_object(text: str):
    decoder = json.JSONDecoder()
    for m in re.finditer(r"\{", text):
        try:
            obj, _ = decoder.raw_decode(text, m.start())
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict):
            return obj
    return None


def parse_response(raw: RawResponse) -> RecordFragment:
    """Read the JSON envelope out of a model response.

    Unknown keys are ignored. A value that fails to parse (say, a temperature
    without a unit) leaves that field missing but keeps its surface string in
    ``fragment.raw``.
    """
    text = raw.text.strip()
    fenced = _FENCE_RE.search(text)
    if fenced:
        text = fenced.group(1)
    obj = _first_object(text)
    if obj is None:
        raise ParseFailure("response contains no JSON object")
    known = {k: v for k, v in obj.items() if k in ENVELOPE_KEYS}
    return fragment_from_envelope(known, strict=False)
