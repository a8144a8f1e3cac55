"""Typed model of QCL design and working properties.

Quantities keep the unit they were written in (200 mW stays 200 mW);
conversion only happens when two quantities are compared.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence


class QuantityError(ValueError):
    pass


class UnparsableQuantity(QuantityError):
    pass


class KindMismatch(QuantityError):
    pass


class InvalidQuantity(QuantityError):
    pass


class MalformedRow(ValueError):
    pass


class QuantityKind(enum.Enum):
    TEMPERATURE = "Temperature"
    POWER = "Power"
    FREQUENCY = "Frequency"


class Unit(enum.Enum):
    KELVIN = "K"
    MILLIWATT = "mW"
    WATT = "W"
    TERAHERTZ = "THz"
    GIGAHERTZ = "GHz"

    @property
    def symbol(self) -> str:
        return self.value


# unit -> (kind, factor to the kind's base unit); bases are K, W, THz
UNIT_TABLE: dict[Unit, tuple[QuantityKind, float]] = {
    Unit.KELVIN: (QuantityKind.TEMPERATURE, 1.0),
    Unit.MILLIWATT: (QuantityKind.POWER, 1e-3),
    Unit.WATT: (QuantityKind.POWER, 1.0),
    Unit.TERAHERTZ: (QuantityKind.FREQUENCY, 1.0),
    Unit.GIGAHERTZ: (QuantityKind.FREQUENCY, 1e-3),
}

UNIT_BY_SYMBOL = {u.symbol: u for u in Unit}


def convert(value: float, unit: Unit, target: Unit) -> float:
    kind, factor = UNIT_TABLE[unit]
    target_kind, target_factor = UNIT_TABLE[target]
    if kind is not target_kind:
        raise KindMismatch(f"cannot convert {unit.symbol} to {target.symbol}")
    if unit is target:
        return value
    return value * factor / target_factor


def format_number(value: float) -> str:
    """Shortest text that parses back to exactly ``value``."""
    if value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


@dataclass(frozen=True)
class Quantity:
    value: float
    unit: Unit
    kind: QuantityKind
    # surface text the value came from, e.g. "3.2-3.8 THz"; not part of identity
    raw: str | None = field(default=None, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "value", float(self.value))
        problem = quantity_problem(self.value, self.unit, self.kind)
        if problem:
            raise InvalidQuantity(problem)

    @property
    def base_value(self) -> float:
        """Value in K, W or THz."""
        return self.value * UNIT_TABLE[self.unit][1]

    def render(self) -> str:
        return f"{format_number(self.value)} {self.unit.symbol}"

    def __str__(self) -> str:
        return self.render()


def quantity_problem(value: float, unit: Unit, kind: QuantityKind) -> str | None:
    """Return a description of the broken invariant, or None."""
    if not math.isfinite(value):
        return "value must be finite"
    if UNIT_TABLE[unit][0] is not kind:
        return f"unit {unit.symbol} is not a {kind.value} unit"
    if kind is QuantityKind.FREQUENCY:
        if value <= 0:
            return "Frequency > 0"
    elif value < 0:
        return f"{kind.value} >= 0"
    return None


_NUM = r"[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"
_UNUM = r"\d+(?:\.\d+)?(?:[eE][-+]?\d+)?"
_QUANTITY_RE = re.compile(
    rf"(?<![\w.])(?P<lo>{_NUM})"
    rf"(?:\s*(?:-|to)\s*(?P<hi>{_UNUM}))?"
    r"(?:\s*(?P<unit>[^\W\d_]+))?"
)
_BETWEEN_RE = re.compile(rf"between\s+({_UNUM})\s+and\s+({_UNUM})", re.IGNORECASE)


@dataclass(frozen=True)
class QuantityMention:
    """One "number [range] unit" occurrence in free text."""

    value: float
    unit_text: str | None
    text: str
    start: int

    @property
    def unit(self) -> Unit | None:
        return UNIT_BY_SYMBOL.get(self.unit_text) if self.unit_text else None


def _clean(text: str) -> str:
    text = text.replace("−", "-").replace("–", "-").replace("—", "-")
    return _BETWEEN_RE.sub(r"\1 to \2", text)


def find_quantities(text: str) -> list[QuantityMention]:
    """All numeric mentions in ``text``; ranges collapse to their upper bound."""
    out = []
    for m in _QUANTITY_RE.finditer(_clean(text)):
        value = float(m.group("hi") or m.group("lo"))
        out.append(QuantityMention(value, m.group("unit"), m.group(0), m.start()))
    return out


def parse_quantity(text: str, kind: QuantityKind) -> Quantity:
    """Parse a surface string like ``"200 mW"`` into a Quantity of ``kind``.

    Unit symbols are matched case-sensitively. When the text holds several
    values of the requested kind, the largest one wins.
    """
    if not text or not text.strip():
        raise UnparsableQuantity("empty quantity text")
    mentions = find_quantities(text)
    if not mentions:
        raise UnparsableQuantity(f"no number in {text!r}")
    known = [m for m in mentions if m.unit is not None]
    if not known:
        raise UnparsableQuantity(f"no recognized unit in {text!r}")
    fitting = [m for m in known if UNIT_TABLE[m.unit][0] is kind]
    if not fitting:
        units = ", ".join(sorted({m.unit.symbol for m in known}))
        raise KindMismatch(f"{units} is not a {kind.value} unit")
    best = max(fitting, key=lambda m: m.value * UNIT_TABLE[m.unit][1])
    return Quantity(best.value, best.unit, kind, raw=text.strip())


class WorkingMode(enum.Enum):
    CONTINUOUS_WAVE = "ContinuousWave"
    PULSED = "Pulsed"


_MODE_ALIASES = {
    "continuouswave": WorkingMode.CONTINUOUS_WAVE,
    "continuous wave": WorkingMode.CONTINUOUS_WAVE,
    "continuous-wave": WorkingMode.CONTINUOUS_WAVE,
    "cw": WorkingMode.CONTINUOUS_WAVE,
    "pulsed": WorkingMode.PULSED,
    "pulse": WorkingMode.PULSED,
    "pulse mode": WorkingMode.PULSED,
    "pulsed mode": WorkingMode.PULSED,
}


def parse_working_mode(text: str) -> WorkingMode:
    key = " ".join(text.strip().lower().replace("_", " ").split())
    key = key.removesuffix(" operation")
    try:
        return _MODE_ALIASES[key]
    except KeyError:
        raise ValueError(f"unknown working mode {text!r}") from None


# design-type synonyms -> canonical (lowercase) label
DESIGN_SYNONYMS = {
    "lo phonon": "lo phonon",
    "longitudinal optical phonon": "lo phonon",
    "lo phonon depopulation": "lo phonon",
    "lo phonon scattering": "lo phonon",
    "resonant phonon": "resonant phonon",
    "resonant phonon depopulation": "resonant phonon",
    "rp": "resonant phonon",
    "bound to continuum": "bound to continuum",
    "btc": "bound to continuum",
}
KNOWN_DESIGN_TYPES = ("lo phonon", "resonant phonon", "bound to continuum")


def normalize_design_label(text: str) -> str:
    key = " ".join(re.sub(r"[-_]", " ", text.lower()).split())
    for suffix in (" design type", " design", " scheme", " type"):
        if key.endswith(suffix) and len(key) > len(suffix):
            key = key[: -len(suffix)]
            break
    return DESIGN_SYNONYMS.get(key, key)


@dataclass(frozen=True)
class DesignType:
    label: str
    raw: str | None = field(default=None, compare=False)

    @classmethod
    def from_text(cls, text: str) -> DesignType:
        return cls(normalize_design_label(text), raw=text)


@dataclass(frozen=True)
class Heterostructure:
    # either may be missing, but not both
    mat_formula: str | None = None
    design_type: DesignType | None = None


class PropertyClass(enum.Enum):
    POWER = "power"
    TEMPERATURE = "temperature"
    DESIGN_TYPE = "design_type"
    FREQUENCY = "frequency"
    HETEROSTRUCTURE = "heterostructure"

    @property
    def quantity_kind(self) -> QuantityKind | None:
        return _CLASS_KIND.get(self)


_CLASS_KIND = {
    PropertyClass.POWER: QuantityKind.POWER,
    PropertyClass.TEMPERATURE: QuantityKind.TEMPERATURE,
    PropertyClass.FREQUENCY: QuantityKind.FREQUENCY,
}


@dataclass(frozen=True)
class RecordFragment:
    """Properties extracted from (or annotated on) one piece of text."""

    temperature: Quantity | None = None
    power: Quantity | None = None
    frequency: Quantity | None = None
    design_type: DesignType | None = None
    mat_formula: str | None = None
    working_mode: WorkingMode | None = None
    # surface strings per envelope key, kept for scoring and audit
    raw: Mapping[str, str] = field(default_factory=dict, compare=False, hash=False)

    def get(self, prop: PropertyClass):
        if prop is PropertyClass.HETEROSTRUCTURE:
            return self.mat_formula
        return getattr(self, prop.value)

    def present_classes(self) -> set[PropertyClass]:
        return {p for p in PropertyClass if self.get(p) is not None}

    @property
    def is_empty(self) -> bool:
        return not self.present_classes()

    def to_envelope(self) -> dict[str, str | None]:
        """Surface-string form used in prompts and dataset files."""

        def show(value):
            if value is None:
                return None
            if isinstance(value, Quantity):
                return value.render()
            if isinstance(value, DesignType):
                return value.raw or value.label
            if isinstance(value, WorkingMode):
                return value.value
            return value

        env = {p.value: show(self.get(p)) for p in PropertyClass}
        if self.working_mode is not None:
            env["working_mode"] = show(self.working_mode)
        return env


@dataclass(frozen=True)
class QclDeviceRecord:
    device_id: str
    heterostructure: Heterostructure | None = None
    working_mode: WorkingMode | None = None
    temperature: Quantity | None = None
    power: Quantity | None = None
    frequency: Quantity | None = None
    doi: str | None = None
    url: str | None = None
    cited_dois: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cited_dois", tuple(self.cited_dois))

    @property
    def design_type(self) -> DesignType | None:
        return self.heterostructure.design_type if self.heterostructure else None

    @property
    def mat_formula(self) -> str | None:
        return self.heterostructure.mat_formula if self.heterostructure else None

    def has_properties(self) -> bool:
        return any(
            v is not None
            for v in (self.mat_formula, self.design_type, self.temperature, self.power, self.frequency)
        )

    @classmethod
    def from_fragment(cls, device_id: str, frag: RecordFragment, **provenance) -> QclDeviceRecord:
        hs = None
        if frag.mat_formula is not None or frag.design_type is not None:
            hs = Heterostructure(frag.mat_formula, frag.design_type)
        return cls(
            device_id=device_id,
            heterostructure=hs,
            working_mode=frag.working_mode,
            temperature=frag.temperature,
            power=frag.power,
            frequency=frag.frequency,
            **provenance,
        )


@dataclass(frozen=True)
class Violation:
    field: str
    rule: str

    def __str__(self) -> str:
        return f"{self.field}: {self.rule}"


DOI_RE = re.compile(r"^10\.\d{4,9}/\S+$")

_QUANTITY_FIELDS = (
    ("temperature", QuantityKind.TEMPERATURE),
    ("power", QuantityKind.POWER),
    ("frequency", QuantityKind.FREQUENCY),
)


def validate_record(r: QclDeviceRecord) -> list[Violation]:
    """Check every record invariant; returns [] for a valid record."""
    out = []
    if not r.device_id:
        out.append(Violation("device_id", "non-empty"))
    hs = r.heterostructure
    if hs is not None:
        if hs.mat_formula is None and hs.design_type is None:
            out.append(Violation("heterostructure", "formula or design type present"))
        if hs.mat_formula is not None:
            if not hs.mat_formula.strip():
                out.append(Violation("mat_formula", "non-empty"))
            elif "/" not in hs.mat_formula:
                out.append(Violation("mat_formula", "contains '/' between layers"))
        if hs.design_type is not None:
            label = hs.design_type.label
            if not label or label != label.lower() or label != label.strip():
                out.append(Violation("design_type", "lowercase non-empty label"))
    for name, kind in _QUANTITY_FIELDS:
        q = getattr(r, name)
        if q is None:
            continue
        if q.kind is not kind:
            out.append(Violation(name, f"kind = {kind.value}"))
            continue
        problem = quantity_problem(q.value, q.unit, q.kind)
        if problem:
            out.append(Violation(name, problem))
    if r.working_mode is not None and not isinstance(r.working_mode, WorkingMode):
        out.append(Violation("working_mode", "ContinuousWave or Pulsed"))
    if r.doi is not None and not DOI_RE.match(r.doi):
        out.append(Violation("doi", "matches 10.<registrant>/<suffix>"))
    for doi in r.cited_dois:
        if not DOI_RE.match(doi):
            out.append(Violation("cited_dois", f"{doi!r} matches 10.<registrant>/<suffix>"))
    if not r.has_properties():
        out.append(Violation("record", "incomplete record: no property present"))
    return out


CSV_COLUMNS = (
    "device_id",
    "mat_formula",
    "design_type",
    "working_mode",
    "temperature_K",
    "power_value",
    "power_unit",
    "frequency_value",
    "frequency_unit",
    "doi",
    "url",
    "cited_dois",
)


def record_to_csv_row(r: QclDeviceRecord) -> list[str]:
    def num(q):
        return format_number(q.value) if q else ""

    return [
        r.device_id,
        r.mat_formula or "",
        r.design_type.label if r.design_type else "",
        r.working_mode.value if r.working_mode else "",
        num(r.temperature),
        num(r.power),
        r.power.unit.symbol if r.power else "",
        num(r.frequency),
        r.frequency.unit.symbol if r.frequency else "",
        r.doi or "",
        r.url or "",
        ";".join(r.cited_dois),
    ]


def record_from_csv_row(row: Sequence[str]) -> QclDeviceRecord:
    if len(row) != len(CSV_COLUMNS):
        raise MalformedRow(f"expected {len(CSV_COLUMNS)} cells, got {len(row)}")
    cells = dict(zip(CSV_COLUMNS, row))

    def opt(name):
        return cells[name] or None

    def quantity(value_col, unit, kind):
        if not cells[value_col]:
            return None
        try:
            return Quantity(float(cells[value_col]), unit, kind)
        except (ValueError, TypeError) as exc:
            raise MalformedRow(f"{value_col}: {exc}") from None

    def unit_of(col):
        sym = cells[col]
        if sym not in UNIT_BY_SYMBOL:
            raise MalformedRow(f"{col}: unknown unit {sym!r}")
        return UNIT_BY_SYMBOL[sym]

    if not cells["device_id"]:
        raise MalformedRow("device_id is empty")
    hs = None
    if cells["mat_formula"] or cells["design_type"]:
        design = DesignType(cells["design_type"], raw=cells["design_type"]) if cells["design_type"] else None
        hs = Heterostructure(opt("mat_formula"), design)
    mode = None
    if cells["working_mode"]:
        try:
            mode = WorkingMode(cells["working_mode"])
        except ValueError:
            raise MalformedRow(f"working_mode: {cells['working_mode']!r}") from None
    power = quantity("power_value", unit_of("power_unit"), QuantityKind.POWER) if cells["power_value"] else None
    freq = (
        quantity("frequency_value", unit_of("frequency_unit"), QuantityKind.FREQUENCY)
        if cells["frequency_value"]
        else None
    )
    return QclDeviceRecord(
        device_id=cells["device_id"],
        heterostructure=hs,
        working_mode=mode,
        temperature=quantity("temperature_K", Unit.KELVIN, QuantityKind.TEMPERATURE),
        power=power,
        frequency=freq,
        doi=opt("doi"),
        url=opt("url"),
        cited_dois=tuple(d for d in cells["cited_dois"].split(";") if d),
    )


def write_records_csv(records: Iterable[QclDeviceRecord], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow(record_to_csv_row(r))


def records_to_csv(records: Iterable[QclDeviceRecord]) -> str:
    buf = io.StringIO()
    write_records_csv(records, buf)
    return buf.getvalue()


def read_records_csv(stream) -> list[QclDeviceRecord]:
    reader = csv.reader(stream)
    header = next(reader, None)
    if header is None:
        raise MalformedRow("missing header row")
    if tuple(header) != CSV_COLUMNS:
        raise MalformedRow(f"header mismatch: {header}")
    out = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        try:
            out.append(record_from_csv_row(row))
        except MalformedRow as exc:
            raise MalformedRow(f"line {lineno}: {exc}") from None
    return out
