"""Structured knowledge base: germplasm traits, seed prices, technique docs.

Three read-only record stores loaded from UTF-8 CSV. Matching is exact-string
or numeric only; Chinese and English values both pass through as opaque
strings. Queries are pure and deterministic.
"""

from __future__ import annotations

import csv
import datetime as _dt
from dataclasses import dataclass, field

from .errors import EmptyInput, InvalidInput, ParseError, UnknownField

QUALITY_FIELDS = ("crude_protein", "lysine", "sedimentation_value")
RESISTANCE_FIELDS = ("stripe_rust", "leaf_rust", "powdery_mildew", "drought", "cold")
AGRONOMIC_FIELDS = ("maturity", "plant_height", "thousand_grain_weight", "grain_hardness")

CRITERION_OPS = ("<=", ">=", "!=", "==", "<", ">")

PRICE_DATE_WINDOW_DAYS = 31


@dataclass(frozen=True)
class GermplasmRecord:
    """One variety with quality, resistance, and agronomic traits."""

    variety_name: str
    origin: str = ""
    quality: dict = field(default_factory=dict)
    resistance: dict = field(default_factory=dict)
    agronomic: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.variety_name:
            raise InvalidInput("variety_name must be non-empty")
        for group in (self.quality, self.agronomic):
            for key, value in group.items():
                if isinstance(value, (int, float)) and value < 0:
                    raise InvalidInput(f"{self.variety_name}: {key} must be >= 0")

    def get_field(self, name: str):
        """Flat field lookup across identity, quality, resistance, agronomic."""
        if name == "variety_name":
            return self.variety_name
        if name == "origin":
            return self.origin
        for group in (self.quality, self.resistance, self.agronomic):
            if name in group:
                return group[name]
        known = (
            ("variety_name", "origin")
            + QUALITY_FIELDS
            + RESISTANCE_FIELDS
            + AGRONOMIC_FIELDS
        )
        if name in known:
            return None  # known field, value absent for this record
        raise UnknownField(f"unknown germplasm field {name!r}")


@dataclass(frozen=True)
class PriceRecord:
    """One seed-price observation."""

    observation_point: str
    variety_name: str
    price: float
    specification: float  # kg per bag
    planting_area: str
    date: _dt.date

    def __post_init__(self):
        if not self.price > 0:
            raise InvalidInput("price must be > 0")
        if not self.specification > 0:
            raise InvalidInput("specification must be > 0")


@dataclass(frozen=True)
class DocRecord:
    """One cultivation or plant-protection document."""

    doc_id: str
    category: str
    title: str
    body: str
    source: str = ""

    def __post_init__(self):
        if self.category not in ("cultivation", "plant_protection"):
            raise InvalidInput(f"doc category must be cultivation/plant_protection, got {self.category!r}")
        if not self.body:
            raise InvalidInput(f"doc {self.doc_id}: body must be non-empty")


@dataclass(frozen=True)
class Criterion:
    """One conjunctive screening predicate: field op value."""

    field: str
    op: str
    value: object

    def __post_init__(self):
        if self.op not in CRITERION_OPS:
            raise InvalidInput(f"criterion op must be one of {CRITERION_OPS}, got {self.op!r}")

    def matches(self, record: GermplasmRecord) -> bool:
        actual = record.get_field(self.field)
        if actual is None:
            return False
        want = self.value
        a_num, w_num = _as_number(actual), _as_number(want)
        if a_num is not None and w_num is not None:
            actual, want = a_num, w_num
        elif self.op not in ("==", "!="):
            # ordering comparisons need numbers on both sides
            return False
        if self.op == "==":
            return actual == want
        if self.op == "!=":
            return actual != want
        if self.op == "<=":
            return actual <= want
        if self.op == ">=":
            return actual >= want
        if self.op == "<":
            return actual < want
        return actual > want


def _as_number(value):
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(str(value))
    except (TypeError, ValueError):
        return None


def parse_criterion(text: str) -> Criterion:
    """Parse "field<=value" style criteria (ops: <=, >=, !=, ==, <, >)."""
    for op in CRITERION_OPS:
        if op in text:
            fieldname, _, raw = text.partition(op)
            fieldname, raw = fieldname.strip(), raw.strip()
            if not fieldname or not raw:
                raise InvalidInput(f"malformed criterion {text!r}")
            num = _as_number(raw)
            return Criterion(field=fieldname, op=op, value=num if num is not None else raw)
    raise InvalidInput(f"criterion {text!r} has no operator (expected one of {CRITERION_OPS})")


def screen_germplasm(records, criteria) -> list[GermplasmRecord]:
    """Records satisfying every criterion, sorted by variety_name ascending."""
    criteria = list(criteria)
    if not criteria:
        raise InvalidInput("criteria must be non-empty")
    for c in criteria:
        # surface unknown fields even if no record would be tested against them
        GermplasmRecord(variety_name="_probe").get_field(c.field)
    hits = [r for r in records if all(c.matches(r) for c in criteria)]
    return sorted(hits, key=lambda r: r.variety_name)


# ---------------------------------------------------------------------------
# Trait flags for screening subtasks and the germplasm feature domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraitThresholds:
    """Configurable predicates behind the HQ/DS/DR/MP/AM trait flags.

    Defaults are documented conventions, not values from any monitoring
    standard: HQ = crude protein >= 14 %; DS = disease resistance level in
    ``resistant_levels`` for at least one (or all, if ``ds_require_all``) of
    stripe rust / leaf rust / powdery mildew; DR likewise for drought;
    MP = maturity <= 200 days (or a class in ``mp_classes``); AM = plant
    height <= 80 cm.
    """

    hq_min_crude_protein: float = 14.0
    resistant_levels: tuple = ("HR", "R", "MR")
    ds_require_all: bool = False
    mp_max_days: float = 200.0
    mp_classes: tuple = ("early",)
    am_max_height_cm: float = 80.0


DEFAULT_TRAIT_THRESHOLDS = TraitThresholds()


def trait_flags(record: GermplasmRecord, thresholds: TraitThresholds = DEFAULT_TRAIT_THRESHOLDS) -> dict:
    """0/1 indicator for each of the five screening traits."""
    protein = _as_number(record.quality.get("crude_protein"))
    hq = protein is not None and protein >= thresholds.hq_min_crude_protein

    disease = [record.resistance.get(k) for k in ("stripe_rust", "leaf_rust", "powdery_mildew")]
    resistant = [lvl in thresholds.resistant_levels for lvl in disease if lvl is not None]
    if not resistant:
        ds = False
    elif thresholds.ds_require_all:
        ds = all(resistant) and len(resistant) == 3
    else:
        ds = any(resistant)

    dr = record.resistance.get("drought") in thresholds.resistant_levels

    maturity = record.agronomic.get("maturity")
    m_num = _as_number(maturity)
    if m_num is not None:
        mp = m_num <= thresholds.mp_max_days
    else:
        mp = maturity in thresholds.mp_classes

    height = _as_number(record.agronomic.get("plant_height"))
    am = height is not None and height <= thresholds.am_max_height_cm

    return {"HQ": int(hq), "DS": int(ds), "DR": int(dr), "MP": int(mp), "AM": int(am)}


# ---------------------------------------------------------------------------
# Price queries
# ---------------------------------------------------------------------------


def query_price(records, observation_point: str, date, variety: str | None = None) -> list[PriceRecord]:
    """Price records at an observation point nearest a date.

    Exact match on observation point (and variety when given); the date
    matches the nearest record within +-31 days, ties resolved toward the
    earlier date. An empty result is the honest "no data" answer, not an
    error.
    """
    when = _parse_date(date)
    candidates = [r for r in records if r.observation_point == observation_point]
    if variety is not None:
        candidates = [r for r in candidates if r.variety_name == variety]
    dated = [
        (abs((r.date - when).days), r.date, r)
        for r in candidates
        if abs((r.date - when).days) <= PRICE_DATE_WINDOW_DAYS
    ]
    if not dated:
        return []
    best_gap, best_date, _ = min(dated, key=lambda t: (t[0], t[1]))
    return sorted(
        (r for gap, d, r in dated if gap == best_gap and d == best_date),
        key=lambda r: (r.variety_name, r.price),
    )


def price_consistent(answer_price: float, kb_record: PriceRecord) -> bool:
    """True iff the answer is within +-10 % of the recorded price, inclusive."""
    return abs(answer_price - kb_record.price) <= 0.10 * kb_record.price


def _parse_date(date) -> _dt.date:
    if isinstance(date, _dt.date):
        return date
    try:
        return _dt.date.fromisoformat(str(date))
    except ValueError:
        raise InvalidInput(f"unparseable ISO date: {date!r}")


# ---------------------------------------------------------------------------
# CSV loaders
# ---------------------------------------------------------------------------


def _read_rows(path, required: tuple) -> list[dict]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not set(required).issubset(reader.fieldnames):
            raise ParseError(
                f"{path}: need columns {sorted(required)}, got {reader.fieldnames}", line=1
            )
        rows = list(reader)
    if not rows:
        raise EmptyInput(f"no rows in {path}")
    return rows


def load_germplasm(path) -> list[GermplasmRecord]:
    """Read germplasm.csv; trait columns are optional and may be blank."""
    rows = _read_rows(path, ("variety_name",))
    records = []
    for rec in rows:
        quality = {}
        for key in QUALITY_FIELDS:
            num = _as_number(rec.get(key, ""))
            if num is not None:
                quality[key] = num
        resistance = {k: rec[k].strip() for k in RESISTANCE_FIELDS if rec.get(k, "").strip()}
        agronomic = {}
        for key in AGRONOMIC_FIELDS:
            raw = rec.get(key, "").strip()
            if not raw:
                continue
            num = _as_number(raw)
            agronomic[key] = num if num is not None else raw
        records.append(
            GermplasmRecord(
                variety_name=rec["variety_name"].strip(),
                origin=rec.get("origin", "").strip(),
                quality=quality,
                resistance=resistance,
                agronomic=agronomic,
            )
        )
    return records


def load_prices(path) -> list[PriceRecord]:
    required = ("observation_point", "variety_name", "price", "specification", "planting_area", "date")
    records = []
    for i, rec in enumerate(_read_rows(path, required), start=2):
        try:
            records.append(
                PriceRecord(
                    observation_point=rec["observation_point"].strip(),
                    variety_name=rec["variety_name"].strip(),
                    price=float(rec["price"]),
                    specification=float(rec["specification"]),
                    planting_area=rec["planting_area"].strip(),
                    date=_parse_date(rec["date"].strip()),
                )
            )
        except (ValueError, InvalidInput) as exc:
            raise ParseError(f"bad price row: {exc}", line=i)
    return records


def load_docs(path) -> list[DocRecord]:
    required = ("doc_id", "category", "title", "body")
    records = []
    for i, rec in enumerate(_read_rows(path, required), start=2):
        try:
            records.append(
                DocRecord(
                    doc_id=rec["doc_id"].strip(),
                    category=rec["category"].strip(),
                    title=rec["title"].strip(),
                    body=rec["body"],
                    source=rec.get("source", "").strip(),
                )
            )
        except InvalidInput as exc:
            raise ParseError(f"bad doc row: {exc}", line=i)
    return records
