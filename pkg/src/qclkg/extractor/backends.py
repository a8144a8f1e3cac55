"""Generation backends: the deterministic rule-based mock and an HTTP adapter."""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Protocol

from ..property_model import (
    DESIGN_SYNONYMS,
    UNIT_TABLE,
    PropertyClass,
    QuantityKind,
    find_quantities,
    format_number,
)
from .prompts import ENVELOPE_KEYS, GeneratedPrompt

log = logging.getLogger(__name__)


class BackendFailure(Exception):
    pass


class GenerationBackend(Protocol):
    name: str

    def generate(self, prompt: GeneratedPrompt) -> str: ...


_ELEMENTS = (
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni Cu Zn Ga Ge As Se Br Kr "
    "Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I Xe Cs Ba La Hf Ta W Re Os Ir Pt Au Hg Tl Pb Bi"
).split()
_ELEMENT = "(?:" + "|".join(sorted(_ELEMENTS, key=len, reverse=True)) + r")(?:\d+(?:\.\d+)?)?"
_COMPOUND = rf"(?:{_ELEMENT}){{2,}}"
FORMULA_RE = re.compile(rf"(?<![\w/]){_COMPOUND}(?:/{_COMPOUND})+(?![\w/])")

_DESIGN_PATTERNS = sorted(
    ((re.compile(r"\b" + re.escape(key).replace(r"\ ", r"[\s-]+") + r"\b", re.IGNORECASE), key) for key in DESIGN_SYNONYMS if len(key) > 3),
    key=lambda t: len(t[1]),
    reverse=True,
)
_MODE_PATTERNS = (
    (re.compile(r"\bcontinuous[\s-]wave\b|\bCW\b", re.IGNORECASE), "ContinuousWave"),
    (re.compile(r"\bpulsed?\b(?:\s+(?:mode|operation|regime))?", re.IGNORECASE), "Pulsed"),
)
_KIND_KEYS = {
    QuantityKind.TEMPERATURE: "temperature",
    QuantityKind.POWER: "power",
    QuantityKind.FREQUENCY: "frequency",
}


def rule_based_extract(text: str, target: PropertyClass | None = None) -> dict[str, str | None]:
    """Regex and keyword extraction mirroring the prompt's output rules.

    Per quantity kind the largest value wins; ranges give their upper bound.
    The first heterostructure formula and the longest design-type phrase found
    are reported.
    """
    env: dict[str, str | None] = {key: None for key in ENVELOPE_KEYS}
    best = {}
    for m in find_quantities(text):
        unit = m.unit
        if unit is None:
            continue
        kind, factor = UNIT_TABLE[unit]
        base = m.value * factor
        if kind not in best or base > best[kind][0]:
            best[kind] = (base, f"{format_number(m.value)} {unit.symbol}")
    for kind, (_, surface) in best.items():
        env[_KIND_KEYS[kind]] = surface

    formula = FORMULA_RE.search(text)
    if formula:
        env["heterostructure"] = formula.group(0)

    hits = []
    for pattern, key in _DESIGN_PATTERNS:
        for m in pattern.finditer(text):
            hits.append((m.start(), -len(m.group(0)), m.group(0)))
    if hits:
        env["design_type"] = min(hits)[2]

    modes = []
    for pattern, mode in _MODE_PATTERNS:
        m = pattern.search(text)
        if m:
            modes.append((m.start(), mode))
    if modes:
        env["working_mode"] = min(modes)[1]

    if target is not None:
        env = {key: (env[key] if key == target.value else None) for key in env}
    return env


class MockBackend:
    """Deterministic stand-in for a language model.

    Reads the query sentence carried on the prompt (not the examples) and
    answers with the JSON envelope the template asks for.
    """

    name = "mock"

    def generate(self, prompt: GeneratedPrompt) -> str:
        return json.dumps(rule_based_extract(prompt.sentence, prompt.target))


class TokenBucket:
    def __init__(self, rate: float, capacity: float | None = None, clock=time.monotonic, sleep=time.sleep):
        if rate <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate
        self.capacity = capacity if capacity is not None else max(1.0, rate)
        self.tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self.tokens = min(self.capacity, self.tokens + (now - self._last) * self.rate)
                self._last = now
                if self.tokens >= 1:
                    self.tokens -= 1
                    return
                wait = (1 - self.tokens) / self.rate
            self._sleep(wait)


_TRANSIENT_STATUS = {408, 429, 500, 502, 503, 504}


@dataclass
class HttpBackend:
    """OpenAI-style chat-completions client.

    Transient failures are retried ``retries`` times with exponential backoff
    before giving up with BackendFailure.
    """

    endpoint: str
    model: str = ""
    api_key_env: str | None = None
    max_tokens: int = 512
    temperature: float = 0.0
    timeout: float = 60.0
    retries: int = 2
    backoff: float = 1.0
    name: str = "http"

    def _request(self, prompt: GeneratedPrompt) -> urllib.request.Request:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        headers = {"Content-Type": "application/json"}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env)
            if not key:
                raise BackendFailure(f"environment variable {self.api_key_env} is not set")
            headers["Authorization"] = f"Bearer {key}"
        return urllib.request.Request(self.endpoint, data=json.dumps(body).encode("utf-8"), headers=headers)

    def generate(self, prompt: GeneratedPrompt) -> str:
        req = self._request(prompt)
        last_error = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    payload = json.loads(resp.read().decode("utf-8"))
                return _response_text(payload)
            except urllib.error.HTTPError as exc:
                last_error = f"HTTP {exc.code}"
                if exc.code not in _TRANSIENT_STATUS:
                    break
            except (urllib.error.URLError, TimeoutError, ConnectionError) as exc:
                last_error = str(getattr(exc, "reason", exc))
            except ValueError as exc:
                raise BackendFailure(f"unreadable response body: {exc}") from exc
            log.warning("backend %s attempt %d failed: %s", self.endpoint, attempt + 1, last_error)
        raise BackendFailure(f"{self.endpoint}: {last_error}")


def _response_text(payload) -> str:
    if isinstance(payload, dict):
        choices = payload.get("choices")
        if choices:
            first = choices[0]
            if isinstance(first.get("message"), dict):
                return first["message"].get("content") or ""
            if "text" in first:
                return first["text"]
        for key in ("response", "text", "output"):
            if isinstance(payload.get(key), str):
                return payload[key]
    raise BackendFailure("response JSON has no completion text")


def backend_from_config(cfg: dict) -> GenerationBackend:
    kind = cfg.get("type", "mock")
    if kind == "mock":
        return MockBackend()
    if kind == "http":
        if not cfg.get("endpoint"):
            raise ValueError("http backend needs an endpoint")
        return HttpBackend(
            endpoint=cfg["endpoint"],
            model=cfg.get("model", ""),
            api_key_env=cfg.get("api_key_env") or None,
            max_tokens=int(cfg.get("max_tokens", 512)),
            temperature=float(cfg.get("temperature", 0.0)),
            timeout=float(cfg.get("timeout", 60.0)),
            retries=int(cfg.get("retries", 2)),
            backoff=float(cfg.get("backoff", 1.0)),
        )
    raise ValueError(f"unknown backend type {kind!r}")
