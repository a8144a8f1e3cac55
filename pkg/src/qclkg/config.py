"""Run configuration read from an INI file.

Relative paths are resolved against the directory holding the config file.
Every file a command writes goes under ``paths.output_dir``.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from pathlib import Path

from .kg.build import DEFAULT_BASE

DEFAULT_SEED = 20240601


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    source: Path
    output_dir: Path
    instruction_dataset: Path | None = None
    abstract_corpus: Path | None = None
    gold_set: Path | None = None
    index_file: Path | None = None
    records_csv: Path | None = None
    kg_file: Path | None = None
    mapping_table: Path | None = None
    query_catalog: Path | None = None
    expected_results: Path | None = None
    k: int = 3
    embedder: dict = field(default_factory=lambda: {"type": "hashing", "dimension": "256"})
    per_property: bool = False
    class_filter: bool = False
    backend: dict = field(default_factory=lambda: {"type": "mock"})
    requests_per_second: float | None = None
    base_iri: str = DEFAULT_BASE
    seed: int = DEFAULT_SEED
    train_frac: float = 0.8
    test_frac: float = 0.1

    def out(self, name: str) -> Path:
        return self.output_dir / name

    @property
    def index_path(self) -> Path:
        return self.index_file or self.out("index.jsonl")

    @property
    def records_path(self) -> Path:
        return self.records_csv or self.out("records.csv")

    @property
    def kg_path(self) -> Path:
        return self.kg_file or self.out("kg.ttl")


_PATH_KEYS = (
    "instruction_dataset",
    "abstract_corpus",
    "gold_set",
    "index_file",
    "records_csv",
    "kg_file",
    "mapping_table",
    "query_catalog",
    "expected_results",
)


def _bool(section, key, default):
    try:
        return section.getboolean(key, fallback=default)
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key}: {exc}") from None


def load_config(path) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}") from None
    known = {"paths", "retrieval", "backend", "kg", "run"}
    unknown = set(parser.sections()) - known
    if unknown:
        raise ConfigError(f"{path}: unknown section(s) {sorted(unknown)}")
    root = path.parent.resolve()

    def resolve(value: str) -> Path:
        p = Path(value).expanduser()
        return p if p.is_absolute() else root / p

    paths = parser["paths"] if parser.has_section("paths") else {}
    values: dict = {}
    for key in _PATH_KEYS:
        if paths.get(key):
            values[key] = resolve(paths[key])
    output_dir = resolve(paths.get("output_dir") or "out")

    if parser.has_section("retrieval"):
        sec = parser["retrieval"]
        try:
            values["k"] = sec.getint("k", fallback=3)
        except ValueError:
            raise ConfigError(f"[retrieval] k must be an integer, got {sec.get('k')!r}") from None
        if values["k"] < 0:
            raise ConfigError("[retrieval] k must be >= 0")
        values["per_property"] = _bool(sec, "per_property", False)
        values["class_filter"] = _bool(sec, "class_filter", False)
        emb = {"type": sec.get("embedder", "hashing"), "dimension": sec.get("dimension", "256")}
        for key in ("endpoint", "command", "name"):
            if sec.get(key):
                emb[key] = sec.get(key)
        values["embedder"] = emb

    if parser.has_section("backend"):
        sec = parser["backend"]
        cfg = dict(sec)
        cfg.setdefault("type", "mock")
        if cfg["type"] == "http" and not cfg.get("api_key_env"):
            # secrets only ever come from the environment
            cfg["api_key_env"] = f"{cfg.get('name', 'llm').upper()}_API_KEY"
        rps = cfg.pop("requests_per_second", None)
        if rps:
            try:
                values["requests_per_second"] = float(rps)
            except ValueError:
                raise ConfigError(f"[backend] requests_per_second is not a number: {rps!r}") from None
        values["backend"] = cfg

    if parser.has_section("kg"):
        values["base_iri"] = parser["kg"].get("base_iri", DEFAULT_BASE)

    if parser.has_section("run"):
        sec = parser["run"]
        try:
            values["seed"] = int(sec.get("seed", str(DEFAULT_SEED)), 0)
            values["train_frac"] = float(sec.get("train_frac", "0.8"))
            values["test_frac"] = float(sec.get("test_frac", "0.1"))
        except ValueError as exc:
            raise ConfigError(f"[run] {exc}") from None
        if not 0 <= values["seed"] < 2**64:
            raise ConfigError("[run] seed must be a 64-bit unsigned integer")

    return RunConfig(source=path, output_dir=output_dir, **values)
