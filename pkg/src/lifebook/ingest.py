"""Delimited-file ingestion and the person-centric index.

Input files are UTF-8 delimited text with a header row matching the declared
schema field order. Dirty rows are rejected with logged reasons instead of
aborting the load, up to a configurable reject fraction; above it the load
aborts with the first reject's error so corruption is loud.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

from .errors import (
    ColumnCountError,
    DateParseError,
    DuplicateSourceNameError,
    LifebookError,
    LoadError,
    MissingColumnError,
    TypeMismatchError,
    UnknownColumnError,
    UnknownSourceError,
)
from .model import (
    AttributeRecord,
    CivilDate,
    DateWindow,
    EventRecord,
    FieldKind,
    FieldSpec,
    PersonId,
    Record,
    SourceRole,
    SourceSchema,
    SpellRecord,
    record_sort_date,
    validate_spell,
)

DEFAULT_MAX_REJECT_FRACTION = 0.01


@dataclass(frozen=True, slots=True)
class Reject:
    """One skipped row and why."""

    file: str
    line: int
    field: str
    reason: str
    error: LifebookError

    def log_line(self) -> str:
        return f"{self.file}:{self.line}\t{self.field}\t{self.reason}"


@dataclass
class RecordSet:
    """All accepted records of one source file, in file order."""

    schema: SourceSchema
    records: list[Record]
    path: str
    rejects: list[Reject] = field(default_factory=list)


def parse_date(raw: str, *, row: int = 0, field_name: str = "") -> CivilDate:
    """Strict ISO date (YYYY-MM-DD)."""
    if len(raw) == 10 and raw[4] == "-" and raw[7] == "-":
        try:
            return CivilDate(int(raw[:4]), int(raw[5:7]), int(raw[8:10]))
        except (ValueError, LifebookError):
            pass
    raise DateParseError(f"bad date {raw!r}", row=row, field=field_name)


def parse_month(raw: str, *, row: int = 0, field_name: str = "") -> CivilDate:
    """Strict ISO month (YYYY-MM), pinned to day 1."""
    if len(raw) == 7 and raw[4] == "-":
        try:
            return CivilDate(int(raw[:4]), int(raw[5:7]), 1)
        except (ValueError, LifebookError):
            pass
    raise DateParseError(f"bad month {raw!r}", row=row, field=field_name)


def parse_year(raw: str, *, row: int = 0, field_name: str = "") -> int:
    if len(raw) == 4 and raw.isdigit():
        return int(raw)
    raise DateParseError(f"bad year {raw!r}", row=row, field=field_name)


def _check_value(raw: str, kind: FieldKind, *, row: int, field_name: str) -> None:
    if kind is FieldKind.INT:
        try:
            int(raw)
        except ValueError:
            raise TypeMismatchError(f"not an integer: {raw!r}", row=row, field=field_name) from None
    elif kind is FieldKind.FLOAT:
        try:
            float(raw)
        except ValueError:
            raise TypeMismatchError(f"not a number: {raw!r}", row=row, field=field_name) from None
    elif kind is FieldKind.DATE:
        if raw:
            parse_date(raw, row=row, field_name=field_name)
    elif kind is FieldKind.PERSON_ID:
        if not raw:
            raise TypeMismatchError("empty person id", row=row, field=field_name)


def load_source(
    schema: SourceSchema,
    path: str,
    *,
    delimiter: str = ",",
    max_reject_fraction: float = DEFAULT_MAX_REJECT_FRACTION,
) -> RecordSet:
    """Parse and validate one source file against its schema.

    Raises MissingColumn/UnknownColumn on a header mismatch. Row-level
    problems (bad dates, type mismatches, broken intervals) become rejects;
    when more than ``max_reject_fraction`` of rows reject, the first
    reject's error is raised instead.
    """
    with open(path, "r", encoding="utf-8", newline="") as handle:
        header_line = handle.readline()
        if header_line == "":
            raise MissingColumnError(f"{path}: empty file, no header", row=0)
        header = header_line.rstrip("\r\n").split(delimiter)
        declared = list(schema.field_names)
        missing = [name for name in declared if name not in header]
        if missing:
            raise MissingColumnError(f"{path}: missing columns {missing}", row=0, field=missing[0])
        extra = [name for name in header if name not in declared]
        if extra:
            raise UnknownColumnError(f"{path}: undeclared columns {extra}", row=0, field=extra[0])
        if header != declared:
            raise UnknownColumnError(
                f"{path}: column order differs from schema {schema.name}", row=0
            )

        column = {name: i for i, name in enumerate(header)}
        focal_i = column[schema.focal_key]
        payload_fields = schema.payload_fields
        payload_idx = tuple(column[name] for name in payload_fields)
        payload_kinds = tuple(schema.kind_of(name) for name in payload_fields)
        n_columns = len(header)
        source = schema.name
        role = schema.role
        link_fields = schema.link_fields

        # Dates and categorical strings repeat massively across rows; cache
        # them so a registry-scale load does not hold millions of duplicates.
        date_cache: dict[str, CivilDate] = {}
        value_cache: dict[str, str] = {}

        records: list[Record] = []
        rejects: list[Reject] = []
        fname = os.path.basename(path)
        total = 0

        for line_no, line in enumerate(handle, start=2):
            total += 1
            cells = line.rstrip("\r\n").split(delimiter)
            try:
                if len(cells) != n_columns:
                    raise ColumnCountError(
                        f"expected {n_columns} columns, found {len(cells)}", row=line_no
                    )
                subject = cells[focal_i]
                if not subject:
                    raise TypeMismatchError("empty focal key", row=line_no, field=schema.focal_key)
                subject = value_cache.setdefault(subject, subject)

                values = []
                for name, idx, kind in zip(payload_fields, payload_idx, payload_kinds):
                    raw = cells[idx]
                    _check_value(raw, kind, row=line_no, field_name=name)
                    if kind is not FieldKind.FLOAT and len(raw) > 1:
                        raw = value_cache.setdefault(raw, raw)
                    values.append(raw)
                values_t = tuple(values)

                record: Record
                if role is SourceRole.SPELLS:
                    raw_start = cells[column[schema.start_field]]
                    start = date_cache.get(raw_start)
                    if start is None:
                        start = parse_date(raw_start, row=line_no, field_name=schema.start_field)
                        date_cache[raw_start] = start
                    end = None
                    if schema.end_field is not None:
                        raw_end = cells[column[schema.end_field]]
                        if raw_end:
                            end = date_cache.get(raw_end)
                            if end is None:
                                end = parse_date(raw_end, row=line_no, field_name=schema.end_field)
                                date_cache[raw_end] = end
                    record = validate_spell(
                        SpellRecord(subject, source, start, end, payload_fields, values_t, line_no),
                        link_fields,
                    )
                elif role is SourceRole.MONTHLY_EVENTS:
                    raw_period = cells[column[schema.period_field]]
                    period = date_cache.get(raw_period)
                    if period is None:
                        period = parse_month(raw_period, row=line_no, field_name=schema.period_field)
                        date_cache[raw_period] = period
                    record = EventRecord(subject, source, period, payload_fields, values_t, line_no)
                elif role is SourceRole.YEARLY_ATTRIBUTES:
                    raw_year = cells[column[schema.as_of_field]]
                    as_of = parse_year(raw_year, row=line_no, field_name=schema.as_of_field)
                    record = AttributeRecord(subject, source, as_of, payload_fields, values_t, line_no)
                else:
                    record = AttributeRecord(subject, source, None, payload_fields, values_t, line_no)
            except LoadError as err:
                rejects.append(Reject(fname, line_no, err.field or "", str(err), err))
            except LifebookError as err:
                rejects.append(Reject(fname, line_no, "", str(err), err))
            else:
                records.append(record)

    if rejects and total and (len(rejects) / total) > max_reject_fraction:
        raise rejects[0].error

    return RecordSet(schema, records, path, rejects)


def render_row(schema: SourceSchema, record: Record, delimiter: str = ",") -> str:
    """Serialize one record back to its delimited row, byte-losslessly."""
    payload = dict(zip(record.fields, record.values))
    cells = []
    for name in schema.field_names:
        if name == schema.focal_key:
            cells.append(record.subject)
        elif name == schema.start_field and isinstance(record, SpellRecord):
            cells.append(record.start.iso())
        elif name == schema.end_field and isinstance(record, SpellRecord):
            cells.append(record.end.iso() if record.end is not None else "")
        elif name == schema.period_field and isinstance(record, EventRecord):
            cells.append(record.period.iso_month())
        elif name == schema.as_of_field and isinstance(record, AttributeRecord):
            cells.append("" if record.as_of is None else f"{record.as_of:04d}")
        else:
            cells.append(payload[name])
    return delimiter.join(cells)


def write_source(schema: SourceSchema, records: list[Record], path: str, delimiter: str = ",") -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        handle.write(delimiter.join(schema.field_names) + "\n")
        for record in records:
            handle.write(render_row(schema, record, delimiter) + "\n")


def write_reject_log(rejects: list[Reject], path: str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for reject in rejects:
            handle.write(reject.log_line() + "\n")


# --- schema registry ------------------------------------------------------

def schema_from_dict(entry: dict) -> SourceSchema:
    return SourceSchema(
        name=entry["name"],
        role=SourceRole(entry["role"]),
        focal_key=entry["focal_key"],
        fields=tuple(
            FieldSpec(f["name"], FieldKind(f.get("kind", "string"))) for f in entry["fields"]
        ),
        start_field=entry.get("start_field"),
        end_field=entry.get("end_field"),
        period_field=entry.get("period_field"),
        as_of_field=entry.get("as_of_field"),
        link_fields=tuple(entry.get("link_fields", ())),
        group_field=entry.get("group_field"),
        file=entry.get("file"),
    )


def schema_to_dict(schema: SourceSchema) -> dict:
    entry: dict = {
        "name": schema.name,
        "role": schema.role.value,
        "focal_key": schema.focal_key,
        "fields": [{"name": f.name, "kind": f.kind.value} for f in schema.fields],
    }
    for key, value in (
        ("start_field", schema.start_field),
        ("end_field", schema.end_field),
        ("period_field", schema.period_field),
        ("as_of_field", schema.as_of_field),
        ("group_field", schema.group_field),
        ("file", schema.file),
    ):
        if value is not None:
            entry[key] = value
    if schema.link_fields:
        entry["link_fields"] = list(schema.link_fields)
    return entry


def load_schema_registry(path: str) -> dict[str, SourceSchema]:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    schemas: dict[str, SourceSchema] = {}
    for entry in doc["sources"]:
        schema = schema_from_dict(entry)
        if schema.name in schemas:
            raise DuplicateSourceNameError(f"duplicate source {schema.name!r} in {path}")
        schemas[schema.name] = schema
    return schemas


def write_schema_registry(schemas: dict[str, SourceSchema], path: str) -> None:
    doc = {"version": 1, "sources": [schema_to_dict(s) for s in schemas.values()]}
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(doc, handle, indent=2)
        handle.write("\n")


# --- person index ---------------------------------------------------------

def _sort_key(record: Record) -> tuple[int, int, int, int, int]:
    date = record_sort_date(record)
    if date is None:
        return (0, 0, 0, 0, record.line)
    return (1, date.year, date.month, date.day, record.line)


class PersonIndex:
    """Per-person, per-source record lists, date-sorted, plus link adjacency.

    Fully materialized in memory; immutable once built and safe to share
    read-only across workers. Desk scale only, no out-of-core mode.
    """

    def __init__(self, sets: list[RecordSet]):
        seen: set[str] = set()
        for record_set in sets:
            if record_set.schema.name in seen:
                raise DuplicateSourceNameError(record_set.schema.name)
            seen.add(record_set.schema.name)

        self.schemas: dict[str, SourceSchema] = {rs.schema.name: rs.schema for rs in sets}
        self._by_person: dict[PersonId, dict[str, list[Record]]] = {}
        self.source_max_date: dict[str, CivilDate | None] = {}
        self.adjacency: dict[str, dict[PersonId, tuple[PersonId, ...]]] = {}

        for record_set in sets:
            source = record_set.schema.name
            max_date: CivilDate | None = None
            for record in record_set.records:
                per_source = self._by_person.setdefault(record.subject, {})
                per_source.setdefault(source, []).append(record)
                date = record_sort_date(record)
                if date is not None and (max_date is None or date > max_date):
                    max_date = date
            self.source_max_date[source] = max_date

        for per_source in self._by_person.values():
            for records in per_source.values():
                records.sort(key=_sort_key)

        for record_set in sets:
            schema = record_set.schema
            if not schema.link_fields:
                continue
            neighbours: dict[PersonId, set[PersonId]] = {}
            for record in record_set.records:
                for link in schema.link_fields:
                    for other in record.links(link):
                        neighbours.setdefault(record.subject, set()).add(other)
            self.adjacency[schema.name] = {
                person: tuple(sorted(ids)) for person, ids in neighbours.items()
            }

    def persons(self) -> list[PersonId]:
        return sorted(self._by_person)

    def has_person(self, person: PersonId) -> bool:
        return person in self._by_person

    def query_records(
        self,
        person: PersonId,
        source: str,
        window: DateWindow | None = None,
    ) -> list[Record]:
        """The person's records in one source overlapping the window,
        ascending. Unknown persons yield an empty list (absence is
        meaningful); unknown sources are an error.
        """
        if source not in self.schemas:
            raise UnknownSourceError(source)
        records = self._by_person.get(person, {}).get(source, [])
        if window is None:
            return list(records)
        kept = []
        for record in records:
            if isinstance(record, SpellRecord):
                if window.overlaps_spell(record.start, record.end):
                    kept.append(record)
            else:
                date = record_sort_date(record)
                if date is None or window.contains(date):
                    kept.append(record)
        return kept


def build_person_index(sets: list[RecordSet]) -> PersonIndex:
    return PersonIndex(sets)


def query_records(
    index: PersonIndex,
    person: PersonId,
    source: str,
    window: DateWindow | None = None,
) -> list[Record]:
    return index.query_records(person, source, window)
