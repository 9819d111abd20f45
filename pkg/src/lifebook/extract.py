"""Turn indexed records into candidate paragraphs for one focal person.

Monthly employment series and yearly education series can be preprocessed
into change paragraphs instead of raw rows: the change, not the repeated
state, carries the information.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

from .errors import UnknownSourceError, UnsortedInputError
from .ingest import PersonIndex
from .model import (
    AttributeRecord,
    CivilDate,
    EventRecord,
    PersonId,
    Resolution,
    SourceRole,
)
from .recipe import SourceSelection


class ParagraphKind(enum.Enum):
    ATTRIBUTE = "attribute"
    SPELL = "spell"
    EVENT = "event"
    CHANGE = "change"
    SUMMARY_SCORE = "summary_score"
    NESTED_BOOK = "nested_book"


@dataclass(frozen=True, slots=True)
class Paragraph:
    """One atomic unit of candidate book content."""

    subject: PersonId
    source: str
    kind: ParagraphKind
    sort_date: CivilDate | None  # None sorts before all dated paragraphs
    resolution: Resolution | None
    fields: tuple[str, ...]
    values: tuple[str, ...]
    provenance: str
    line: int = 0
    nesting_depth: int = 0
    start: CivilDate | None = None  # spell bounds, for templates
    end: CivilDate | None = None
    # link fields of the source record, kept even when the payload
    # projection drops them, so who-expansion survives field selection
    links: tuple[tuple[str, str], ...] = ()

    @property
    def payload(self) -> dict[str, str]:
        return dict(zip(self.fields, self.values))

    def get(self, name: str) -> str:
        try:
            return self.values[self.fields.index(name)]
        except ValueError:
            raise KeyError(name) from None

    def link_ids(self, name: str) -> str | None:
        for field, raw in self.links:
            if field == name:
                return raw
        if name in self.fields:
            return self.get(name)
        return None


@dataclass(frozen=True)
class ChangeThresholds:
    """Knobs for what counts as a reportable employment change.

    The defaults (10% salary jump, 5 vacation or sick days in a month)
    are this package's choices; tune per corpus.
    """

    salary_rel_jump: float = 0.10
    vacation_days_min: float = 5.0
    sick_days_min: float = 5.0

    def __post_init__(self) -> None:
        if self.salary_rel_jump < 0 or self.vacation_days_min < 0 or self.sick_days_min < 0:
            raise ValueError("thresholds must be non-negative")


def _project(
    fields: tuple[str, ...],
    values: tuple[str, ...],
    wanted: tuple[str, ...] | None,
) -> tuple[tuple[str, ...], tuple[str, ...]]:
    if wanted is None:
        return fields, values
    index = {name: i for i, name in enumerate(fields)}
    kept = tuple(name for name in wanted if name in index)
    return kept, tuple(values[index[name]] for name in kept)


def extract_paragraphs(
    index: PersonIndex,
    person: PersonId,
    selections: Sequence[SourceSelection],
    thresholds: ChangeThresholds | None = None,
    nesting_depth: int = 0,
) -> list[Paragraph]:
    """One paragraph per selected record, or per detected change when the
    selection asks for preprocessing. Absent persons yield an empty list.
    """
    thresholds = thresholds or ChangeThresholds()
    paragraphs: list[Paragraph] = []
    for selection in selections:
        schema = index.schemas.get(selection.source)
        if schema is None:
            # validate_recipe pre-empts this; stay loud regardless
            raise UnknownSourceError(selection.source)
        records = index.query_records(person, selection.source, selection.window)
        if not records:
            continue
        source = schema.name
        link_fields = schema.link_fields
        if schema.role is SourceRole.SPELLS:
            for record in records:
                fields, values = _project(record.fields, record.values, selection.fields)
                paragraphs.append(
                    Paragraph(
                        person,
                        source,
                        ParagraphKind.SPELL,
                        record.start,
                        Resolution.DAY,
                        fields,
                        values,
                        f"{source}:{record.line}",
                        record.line,
                        nesting_depth,
                        start=record.start,
                        end=record.end,
                        links=tuple((f, record.get(f)) for f in link_fields),
                    )
                )
        elif schema.role is SourceRole.MONTHLY_EVENTS:
            if selection.changes_only:
                paragraphs.extend(
                    detect_employment_changes(
                        records,
                        thresholds,
                        group_field=schema.group_field,
                        observed_through=index.source_max_date.get(source),
                        nesting_depth=nesting_depth,
                    )
                )
            else:
                for record in records:
                    fields, values = _project(record.fields, record.values, selection.fields)
                    paragraphs.append(
                        Paragraph(
                            person,
                            source,
                            ParagraphKind.EVENT,
                            record.period,
                            Resolution.MONTH,
                            fields,
                            values,
                            f"{source}:{record.line}",
                            record.line,
                            nesting_depth,
                            links=tuple((f, record.get(f)) for f in link_fields),
                        )
                    )
        elif schema.role is SourceRole.YEARLY_ATTRIBUTES:
            if selection.changes_only:
                paragraphs.extend(detect_education_changes(records, nesting_depth=nesting_depth))
            else:
                for record in records:
                    fields, values = _project(record.fields, record.values, selection.fields)
                    paragraphs.append(
                        Paragraph(
                            person,
                            source,
                            ParagraphKind.ATTRIBUTE,
                            CivilDate(record.as_of, 1, 1),
                            Resolution.YEAR,
                            fields,
                            values,
                            f"{source}:{record.line}",
                            record.line,
                            nesting_depth,
                        )
                    )
        else:  # static
            for record in records:
                fields, values = _project(record.fields, record.values, selection.fields)
                paragraphs.append(
                    Paragraph(
                        person,
                        source,
                        ParagraphKind.ATTRIBUTE,
                        None,
                        None,
                        fields,
                        values,
                        f"{source}:{record.line}",
                        record.line,
                        nesting_depth,
                    )
                )
    return paragraphs


def _check_sorted(dates: list[CivilDate], what: str) -> None:
    for prev, cur in zip(dates, dates[1:]):
        if cur <= prev:
            raise UnsortedInputError(f"{what} series not strictly ascending at {cur}")


# Within one month the change kinds have a fixed report order.
CHANGE_RANK = {
    "job_start": 0,
    "salary_increase": 1,
    "vacation": 2,
    "sickness": 3,
    "job_end": 4,
    "initial": 0,
    "new_level": 1,
}


def _change(
    subject: PersonId,
    source: str,
    date: CivilDate,
    payload: dict[str, str],
    anchor_line: int,
    nesting_depth: int,
    resolution: Resolution = Resolution.MONTH,
) -> Paragraph:
    return Paragraph(
        subject,
        source,
        ParagraphKind.CHANGE,
        date,
        resolution,
        tuple(payload),
        tuple(payload.values()),
        f"{source}:{anchor_line}~{payload['change']}",
        anchor_line,
        nesting_depth,
    )


def detect_employment_changes(
    events: Sequence[EventRecord],
    thresholds: ChangeThresholds,
    group_field: str | None = None,
    observed_through: CivilDate | None = None,
    salary_field: str = "salary",
    vacation_field: str = "vacation_days",
    sick_field: str = "sick_days",
    nesting_depth: int = 0,
) -> list[Paragraph]:
    """Reduce monthly slips to change paragraphs.

    Per contract (grouped on ``group_field`` when declared): the first month
    emits job_start; month t emits salary_increase when
    salary(t) >= salary(t-1) * (1 + salary_rel_jump), vacation/sickness when
    the month's day counts reach their minimums; a contract whose last slip
    precedes ``observed_through`` emits job_end.
    """
    if not events:
        return []
    groups: dict[str, list[EventRecord]] = {}
    for event in events:
        key = event.get(group_field) if group_field and group_field in event.fields else ""
        groups.setdefault(key, []).append(event)

    changes: list[Paragraph] = []
    for key in sorted(groups):
        series = groups[key]
        _check_sorted([e.period for e in series], f"employment contract {key!r}")
        has_salary = salary_field in series[0].fields
        has_vacation = vacation_field in series[0].fields
        has_sick = sick_field in series[0].fields
        subject, source = series[0].subject, series[0].source

        for t, event in enumerate(series):
            month = event.period
            if t == 0:
                payload = {"change": "job_start"}
                if key:
                    payload["employer"] = key
                if has_salary:
                    payload[salary_field] = event.get(salary_field)
                changes.append(_change(subject, source, month, payload, event.line, nesting_depth))
            elif has_salary:
                salary = float(event.get(salary_field))
                previous = float(series[t - 1].get(salary_field))
                if salary >= previous * (1.0 + thresholds.salary_rel_jump):
                    payload = {"change": "salary_increase"}
                    if key:
                        payload["employer"] = key
                    payload[salary_field] = event.get(salary_field)
                    payload["previous_" + salary_field] = series[t - 1].get(salary_field)
                    changes.append(
                        _change(subject, source, month, payload, event.line, nesting_depth)
                    )
            if has_vacation and float(event.get(vacation_field)) >= thresholds.vacation_days_min:
                payload = {"change": "vacation"}
                if key:
                    payload["employer"] = key
                payload[vacation_field] = event.get(vacation_field)
                changes.append(_change(subject, source, month, payload, event.line, nesting_depth))
            if has_sick and float(event.get(sick_field)) >= thresholds.sick_days_min:
                payload = {"change": "sickness"}
                if key:
                    payload["employer"] = key
                payload[sick_field] = event.get(sick_field)
                changes.append(_change(subject, source, month, payload, event.line, nesting_depth))

        last = series[-1]
        if observed_through is not None and last.period < CivilDate(
            observed_through.year, observed_through.month, 1
        ):
            payload = {"change": "job_end"}
            if key:
                payload["employer"] = key
            changes.append(_change(subject, source, last.period, payload, last.line, nesting_depth))

    changes.sort(key=lambda p: (p.sort_date, p.line, CHANGE_RANK[p.values[0]]))
    return changes


def detect_education_changes(
    yearly: Sequence[AttributeRecord],
    nesting_depth: int = 0,
) -> list[Paragraph]:
    """One paragraph per year the attained value differs from the previous
    year, plus an initial-level paragraph for the first observed year.
    """
    if not yearly:
        return []
    years = [record.as_of for record in yearly]
    for prev, cur in zip(years, years[1:]):
        if prev is None or cur is None or cur <= prev:
            raise UnsortedInputError(f"yearly series not strictly ascending at {cur}")

    changes: list[Paragraph] = []
    previous_values: tuple[str, ...] | None = None
    for record in yearly:
        if previous_values is None:
            marker = "initial"
        elif record.values != previous_values:
            marker = "new_level"
        else:
            previous_values = record.values
            continue
        payload = {"change": marker, **dict(zip(record.fields, record.values))}
        changes.append(
            _change(
                record.subject,
                record.source,
                CivilDate(record.as_of, 1, 1),
                payload,
                record.line,
                nesting_depth,
                Resolution.YEAR,
            )
        )
        previous_values = record.values
    return changes


def attach_summary_score(
    person: PersonId,
    scores: Mapping[PersonId, float],
    label: str,
    nesting_depth: int = 0,
) -> Paragraph | None:
    """One summary paragraph carrying an externally computed score, rendered
    with two decimals; a person missing from the table yields nothing.
    """
    score = scores.get(person)
    if score is None:
        return None
    return Paragraph(
        person,
        label,
        ParagraphKind.SUMMARY_SCORE,
        None,
        None,
        (label,),
        (f"{score:.2f}",),
        f"scores:{label}",
        0,
        nesting_depth,
    )
