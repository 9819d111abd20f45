"""Core domain types: persons, dates, spells, events, attributes, schemas.

Everything here is immutable after construction and safe to share read-only
across parallel workers. Records keep their payload as raw field strings
(exactly as read from disk) so that re-serialization is byte-lossless;
typed interpretation happens at the point of use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .errors import (
    InvalidDateError,
    SelfCoMemberError,
    StartAfterEndError,
)

# Person identifiers are opaque pseudonymous strings. They are never written
# into book text verbatim unless no display-name mapping covers them.
PersonId = str

_DAYS_IN_MONTH = (31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31)

LINK_LIST_SEPARATOR = ";"


def _is_leap(year: int) -> bool:
    return year % 4 == 0 and (year % 100 != 0 or year % 400 == 0)


def days_in_month(year: int, month: int) -> int:
    if month == 2 and _is_leap(year):
        return 29
    return _DAYS_IN_MONTH[month - 1]


class Resolution(enum.Enum):
    """Temporal resolution a date was recorded at."""

    DAY = "day"
    MONTH = "month"
    YEAR = "year"


@dataclass(frozen=True, order=True, slots=True)
class CivilDate:
    """A calendar date with a total order.

    Monthly periods are represented with day=1, yearly values with
    month=1, day=1; the resolution tag travels separately (on paragraphs)
    so a single comparable type covers all source resolutions.
    """

    year: int
    month: int
    day: int

    def __post_init__(self) -> None:
        if not 1 <= self.month <= 12:
            raise InvalidDateError(f"month out of range: {self!s}")
        if not 1 <= self.day <= days_in_month(self.year, self.month):
            raise InvalidDateError(f"day out of range: {self!s}")

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}-{self.day:02d}"

    def iso(self) -> str:
        return str(self)

    def iso_month(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"

    def next_day(self) -> "CivilDate":
        if self.day < days_in_month(self.year, self.month):
            return CivilDate(self.year, self.month, self.day + 1)
        if self.month < 12:
            return CivilDate(self.year, self.month + 1, 1)
        return CivilDate(self.year + 1, 1, 1)

    def next_month(self) -> "CivilDate":
        if self.month < 12:
            return CivilDate(self.year, self.month + 1, self.day)
        return CivilDate(self.year + 1, 1, self.day)

    def prev_day(self) -> "CivilDate":
        if self.day > 1:
            return CivilDate(self.year, self.month, self.day - 1)
        if self.month > 1:
            return CivilDate(self.year, self.month - 1, days_in_month(self.year, self.month - 1))
        return CivilDate(self.year - 1, 12, 31)


def compare_dates(a: CivilDate, b: CivilDate) -> int:
    """Total order over calendar dates: -1, 0 or 1."""
    ka = (a.year, a.month, a.day)
    kb = (b.year, b.month, b.day)
    if ka < kb:
        return -1
    if ka > kb:
        return 1
    return 0


@dataclass(frozen=True, slots=True)
class DateWindow:
    """Inclusive date range used by queries and filters."""

    start: CivilDate
    end: CivilDate

    def __post_init__(self) -> None:
        if compare_dates(self.start, self.end) > 0:
            raise InvalidDateError(f"window start after end: {self.start}..{self.end}")

    def contains(self, date: CivilDate) -> bool:
        return self.start <= date <= self.end

    def overlaps_spell(self, start: CivilDate, end: CivilDate | None) -> bool:
        # A spell overlaps the window iff it starts before the window closes
        # and has not ended before the window opens (open end = ongoing).
        return start <= self.end and (end is None or end >= self.start)

    def __str__(self) -> str:
        return f"{self.start}..{self.end}"


class SourceRole(enum.Enum):
    STATIC = "static"
    SPELLS = "spells"
    MONTHLY_EVENTS = "monthly_events"
    YEARLY_ATTRIBUTES = "yearly_attributes"


class FieldKind(enum.Enum):
    STRING = "string"
    INT = "int"
    FLOAT = "float"
    DATE = "date"
    PERSON_ID = "person_id"
    PERSON_ID_LIST = "person_id_list"


@dataclass(frozen=True, slots=True)
class FieldSpec:
    name: str
    kind: FieldKind = FieldKind.STRING


@dataclass(frozen=True)
class SourceSchema:
    """Declared shape of one registry file.

    ``payload_fields`` is the declared field order minus the focal key and
    date bindings; records store their payload values in exactly this order.
    """

    name: str
    role: SourceRole
    focal_key: str
    fields: tuple[FieldSpec, ...]
    start_field: str | None = None
    end_field: str | None = None
    period_field: str | None = None
    as_of_field: str | None = None
    link_fields: tuple[str, ...] = ()
    group_field: str | None = None  # contract key for monthly event series
    file: str | None = None  # default data file name, "<name>.csv" when unset

    def __post_init__(self) -> None:
        names = [f.name for f in self.fields]
        if len(set(names)) != len(names):
            raise ValueError(f"schema {self.name}: duplicate field names")
        if self.focal_key not in names:
            raise ValueError(f"schema {self.name}: focal key {self.focal_key!r} not declared")
        bindings = {
            SourceRole.STATIC: (),
            SourceRole.SPELLS: (self.start_field,),
            SourceRole.MONTHLY_EVENTS: (self.period_field,),
            SourceRole.YEARLY_ATTRIBUTES: (self.as_of_field,),
        }[self.role]
        for bound in bindings:
            if bound is None:
                raise ValueError(f"schema {self.name}: missing date binding for role {self.role.value}")
        for bound in (self.start_field, self.end_field, self.period_field, self.as_of_field):
            if bound is not None and bound not in names:
                raise ValueError(f"schema {self.name}: date binding {bound!r} not declared")
        for link in self.link_fields:
            if link not in names:
                raise ValueError(f"schema {self.name}: link field {link!r} not declared")
        object.__setattr__(self, "fields", tuple(self.fields))
        object.__setattr__(self, "link_fields", tuple(self.link_fields))

    @property
    def date_bound(self) -> frozenset[str]:
        return frozenset(
            f for f in (self.start_field, self.end_field, self.period_field, self.as_of_field) if f
        )

    @property
    def payload_fields(self) -> tuple[str, ...]:
        skip = self.date_bound | {self.focal_key}
        return tuple(f.name for f in self.fields if f.name not in skip)

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.fields)

    def kind_of(self, name: str) -> FieldKind:
        for f in self.fields:
            if f.name == name:
                return f.kind
        raise KeyError(name)

    @property
    def file_name(self) -> str:
        return self.file or f"{self.name}.csv"


def split_links(raw: str) -> tuple[PersonId, ...]:
    """Parse a raw person-id-list cell (``;``-separated, possibly empty)."""
    if not raw:
        return ()
    return tuple(raw.split(LINK_LIST_SEPARATOR))


class _RecordBase:
    """Shared payload accessors for the three record shapes."""

    __slots__ = ()

    fields: tuple[str, ...]
    values: tuple[str, ...]

    @property
    def payload(self) -> dict[str, str]:
        return dict(zip(self.fields, self.values))

    def get(self, name: str) -> str:
        try:
            return self.values[self.fields.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def links(self, name: str) -> tuple[PersonId, ...]:
        return split_links(self.get(name))


@dataclass(frozen=True, slots=True)
class SpellRecord(_RecordBase):
    """One interval-valued episode; absent end means the spell is ongoing."""

    subject: PersonId
    source: str
    start: CivilDate
    end: CivilDate | None
    fields: tuple[str, ...]
    values: tuple[str, ...]
    line: int = 0

    @classmethod
    def build(
        cls,
        subject: PersonId,
        source: str,
        start: CivilDate,
        end: CivilDate | None,
        payload: dict[str, str],
        line: int = 0,
    ) -> "SpellRecord":
        return cls(subject, source, start, end, tuple(payload), tuple(payload.values()), line)


@dataclass(frozen=True, slots=True)
class EventRecord(_RecordBase):
    """One month of one event series (e.g. a salary slip)."""

    subject: PersonId
    source: str
    period: CivilDate  # day pinned to 1
    fields: tuple[str, ...]
    values: tuple[str, ...]
    line: int = 0

    @classmethod
    def build(
        cls,
        subject: PersonId,
        source: str,
        period: CivilDate,
        payload: dict[str, str],
        line: int = 0,
    ) -> "EventRecord":
        return cls(subject, source, period, tuple(payload), tuple(payload.values()), line)


@dataclass(frozen=True, slots=True)
class AttributeRecord(_RecordBase):
    """Static demographics (no as_of) or one yearly attribute snapshot."""

    subject: PersonId
    source: str
    as_of: int | None
    fields: tuple[str, ...]
    values: tuple[str, ...]
    line: int = 0

    @classmethod
    def build(
        cls,
        subject: PersonId,
        source: str,
        as_of: int | None,
        payload: dict[str, str],
        line: int = 0,
    ) -> "AttributeRecord":
        return cls(subject, source, as_of, tuple(payload), tuple(payload.values()), line)


Record = SpellRecord | EventRecord | AttributeRecord


def record_sort_date(record: Record) -> CivilDate | None:
    if isinstance(record, SpellRecord):
        return record.start
    if isinstance(record, EventRecord):
        return record.period
    if record.as_of is None:
        return None
    return CivilDate(record.as_of, 1, 1)


def validate_spell(record: SpellRecord, link_fields: tuple[str, ...] = ()) -> SpellRecord:
    """Return the record unchanged when its interval invariants hold.

    Ongoing spells (absent end) are accepted. ``link_fields`` names the
    payload fields holding co-member id lists to check against the subject.
    """
    if record.end is not None and compare_dates(record.start, record.end) > 0:
        raise StartAfterEndError(
            f"{record.source} spell for {record.subject}: start {record.start} after end {record.end}"
        )
    for name in link_fields:
        if record.subject in record.links(name):
            raise SelfCoMemberError(
                f"{record.source} spell for {record.subject}: subject listed in {name}"
            )
    return record
