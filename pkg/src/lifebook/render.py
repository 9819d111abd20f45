"""The "how": filter, order, style, and assembly of the final book text.

Parsing dictionaries map raw field names and coded values to readable text;
sentence templates additionally turn a whole paragraph into prose. Every
template carries an inverse so the rendered sentence can be parsed back to
the exact field values it came from, which is what makes the textual
representation checkably lossless.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field as dataclass_field
from typing import Iterable, Mapping, Sequence

from .errors import (
    AmbiguousValueMapError,
    BudgetUnsatisfiableError,
    InverseMismatchError,
    MissingSlotValueError,
    UnknownDictionaryError,
    UnmappedCodeError,
)
from .extract import Paragraph, ParagraphKind
from .model import CivilDate, DateWindow, PersonId, Resolution, split_links
from .recipe import HowSpec, OrderMode, Recipe, StyleKind, StyleSpec

MONTH_NAMES = (
    "January", "February", "March", "April", "May", "June",
    "July", "August", "September", "October", "November", "December",
)

_MONTH_NUMBER = {name: i + 1 for i, name in enumerate(MONTH_NAMES)}


_ORDINAL_SUFFIX = {1: "st", 2: "nd", 3: "rd"}


def ordinal(day: int) -> str:
    if 11 <= day % 100 <= 13:
        return f"{day}th"
    return f"{day}{_ORDINAL_SUFFIX.get(day % 10, 'th')}"


def long_date(date: CivilDate) -> str:
    """Prose date, e.g. ``January 5th 2019``."""
    return f"{MONTH_NAMES[date.month - 1]} {ordinal(date.day)} {date.year}"


_LONG_DATE_RE = re.compile(r"([A-Z][a-z]+) (\d{1,2})(?:st|nd|rd|th) (\d{4})")


def parse_long_date(text: str) -> CivilDate:
    match = _LONG_DATE_RE.fullmatch(text)
    if match is None or match.group(1) not in _MONTH_NUMBER:
        raise InverseMismatchError(f"not a prose date: {text!r}")
    return CivilDate(int(match.group(3)), _MONTH_NUMBER[match.group(1)], int(match.group(2)))


def join_names(names: Sequence[str], empty_text: str) -> str:
    """Prose list: ``A``, ``A and B``, ``A, B and C``; empty_text when none."""
    if not names:
        return empty_text
    if len(names) == 1:
        return names[0]
    return ", ".join(names[:-1]) + " and " + names[-1]


def split_joined_names(text: str, empty_text: str) -> list[str]:
    if text == empty_text:
        return []
    if " and " in text:
        head, _, tail = text.rpartition(" and ")
        return [part.strip() for part in head.split(",")] + [tail.strip()]
    return [text]


# --- sentence templates -----------------------------------------------------

_SLOT_RE = re.compile(r"\{([A-Za-z_][A-Za-z0-9_]*)\}")
_DATE_SLOT_PATTERN = r"[A-Z][a-z]+ \d{1,2}(?:st|nd|rd|th) \d{4}"


def _compile_pattern(pattern: str) -> tuple[re.Pattern, list[str]]:
    slots: list[str] = []
    regex_parts: list[str] = []
    position = 0
    for match in _SLOT_RE.finditer(pattern):
        regex_parts.append(re.escape(pattern[position : match.start()]))
        name = match.group(1)
        if name in slots:
            raise ValueError(f"slot {name!r} appears twice in template")
        slots.append(name)
        if name in ("start", "end"):
            regex_parts.append(f"(?P<{name}>{_DATE_SLOT_PATTERN})")
        else:
            regex_parts.append(f"(?P<{name}>.+?)")
        position = match.end()
    regex_parts.append(re.escape(pattern[position:]))
    return re.compile("".join(regex_parts)), slots


@dataclass(frozen=True)
class SentenceTemplate:
    """A slotted prose pattern plus the grammar to read it back.

    ``pattern`` handles closed spells, ``ongoing_pattern`` spells with no
    end date. Slots name payload fields or the builtins start/end/subject.
    """

    pattern: str
    ongoing_pattern: str | None = None
    empty_members: str = "nobody"

    def _variants(self) -> list[tuple[str, bool]]:
        variants = [(self.pattern, False)]
        if self.ongoing_pattern is not None:
            variants.append((self.ongoing_pattern, True))
        return variants

    def render(
        self,
        paragraph: Paragraph,
        dictionary: "ParsingDictionary",
        name_map: Mapping[PersonId, str] | None = None,
    ) -> str:
        pattern = self.pattern
        if paragraph.kind is ParagraphKind.SPELL and paragraph.end is None:
            if self.ongoing_pattern is None:
                raise MissingSlotValueError(
                    f"template for {dictionary.name!r} has no ongoing-spell variant"
                )
            pattern = self.ongoing_pattern

        payload = paragraph.payload

        def fill(match: re.Match) -> str:
            name = match.group(1)
            if name == "start":
                if paragraph.start is None:
                    raise MissingSlotValueError("slot 'start' on a paragraph with no start date")
                return long_date(paragraph.start)
            if name == "end":
                if paragraph.end is None:
                    raise MissingSlotValueError("slot 'end' on an ongoing spell")
                return long_date(paragraph.end)
            if name == "subject":
                return _display(paragraph.subject, name_map)
            if name in dictionary.list_fields:
                raw_ids = paragraph.link_ids(name)
                if raw_ids is None:
                    raise MissingSlotValueError(f"template slot {name!r} not in paragraph payload")
                ids = split_links(raw_ids)
                return join_names([_display(i, name_map) for i in ids], self.empty_members)
            if name not in payload:
                raise MissingSlotValueError(f"template slot {name!r} not in paragraph payload")
            return dictionary.map_value(name, payload[name])

        return _SLOT_RE.sub(fill, pattern)

    def invert(
        self,
        sentence: str,
        dictionary: "ParsingDictionary",
        reverse_names: Mapping[str, PersonId] | None = None,
    ) -> dict[str, object]:
        """Recover the slotted values from a rendered sentence.

        Returns typed values keyed by slot name: CivilDate for start/end
        (end absent on the ongoing variant), a tuple of person ids for list
        fields, raw codes for value-mapped fields.
        """
        failure: InverseMismatchError | None = None
        for pattern, ongoing in self._variants():
            regex, _ = _compile_pattern(pattern)
            match = regex.fullmatch(sentence)
            if match is None:
                continue
            try:
                out: dict[str, object] = {}
                for name, text in match.groupdict().items():
                    if name in ("start", "end"):
                        out[name] = parse_long_date(text)
                    elif name == "subject":
                        out[name] = _reverse_display(text, reverse_names)
                    elif name in dictionary.list_fields:
                        names = split_joined_names(text, self.empty_members)
                        out[name] = tuple(_reverse_display(n, reverse_names) for n in names)
                    else:
                        out[name] = dictionary.reverse_value(name, text)
                if ongoing:
                    out["end"] = None
                return out
            except InverseMismatchError as err:
                failure = err
        if failure is not None:
            raise failure
        raise InverseMismatchError(f"sentence does not match template: {sentence!r}")


def _display(person: PersonId, name_map: Mapping[PersonId, str] | None) -> str:
    if name_map is None:
        return person
    return name_map.get(person, person)


def _reverse_display(name: str, reverse_names: Mapping[str, PersonId] | None) -> PersonId:
    if reverse_names is None:
        return name
    return reverse_names.get(name, name)


# --- parsing dictionaries ---------------------------------------------------

@dataclass(frozen=True)
class ParsingDictionary:
    """Raw-to-readable mapping for one source, optionally with a template.

    A value map is consulted only for fields it declares; a ``*`` entry is
    the fallback for unseen codes (null keeps the raw code). Fields listed
    in ``list_fields`` hold person-id lists and render as name lists.
    """

    name: str
    source: str
    display: str | None = None
    field_names: Mapping[str, str] = dataclass_field(default_factory=dict)
    value_maps: Mapping[str, Mapping[str, str | None]] = dataclass_field(default_factory=dict)
    list_fields: tuple[str, ...] = ()
    template: SentenceTemplate | None = None

    def display_field(self, field: str) -> str:
        return self.field_names.get(field, field)

    def map_value(self, field: str, code: str) -> str:
        mapping = self.value_maps.get(field)
        if mapping is None:
            return code
        if code in mapping:
            mapped = mapping[code]
            return code if mapped is None else mapped
        if "*" in mapping:
            fallback = mapping["*"]
            return code if fallback is None else fallback
        raise UnmappedCodeError(f"{self.name}: no mapping for {field}={code!r} and no fallback")

    def reverse_value(self, field: str, display: str) -> str:
        mapping = self.value_maps.get(field)
        if mapping is None:
            return display
        codes = [code for code, mapped in mapping.items() if mapped == display and code != "*"]
        if len(codes) > 1:
            raise AmbiguousValueMapError(f"{self.name}: {field} display {display!r} maps to {codes}")
        if codes:
            return codes[0]
        # unmapped codes rendered raw fall through
        if display in mapping or "*" in mapping:
            return display
        raise InverseMismatchError(f"{self.name}: cannot invert {field} display {display!r}")

    def section_header(self) -> str:
        return self.display or self.source


def dictionary_from_dict(name: str, entry: dict) -> ParsingDictionary:
    template = None
    if "template" in entry:
        raw = entry["template"]
        template = SentenceTemplate(
            pattern=raw["pattern"],
            ongoing_pattern=raw.get("ongoing"),
            empty_members=raw.get("empty_members", "nobody"),
        )
    return ParsingDictionary(
        name=name,
        source=entry.get("source", name),
        display=entry.get("display"),
        field_names=dict(entry.get("fields", {})),
        value_maps={f: dict(m) for f, m in entry.get("values", {}).items()},
        list_fields=tuple(entry.get("list_fields", ())),
        template=template,
    )


def load_dictionaries(path: str) -> dict[str, ParsingDictionary]:
    with open(path, "r", encoding="utf-8") as handle:
        doc = json.load(handle)
    return {
        name: dictionary_from_dict(name, entry) for name, entry in doc["dictionaries"].items()
    }


# --- filter and order -------------------------------------------------------

@dataclass(frozen=True)
class FilterPlan:
    """Window first, then per-source last-n (overrides beat the global n)."""

    window: DateWindow | None = None
    last: int | None = None
    per_source_last: Mapping[str, int] = dataclass_field(default_factory=dict)

    @classmethod
    def from_recipe(cls, recipe: Recipe) -> "FilterPlan":
        return cls(
            window=recipe.how.filter.window,
            last=recipe.how.filter.last,
            per_source_last={
                sel.source: sel.last for sel in recipe.what if sel.last is not None
            },
        )


def _in_window(paragraph: Paragraph, window: DateWindow) -> bool:
    if paragraph.sort_date is None:
        return True  # timeless content is never windowed out
    if paragraph.kind is ParagraphKind.SPELL:
        return window.overlaps_spell(paragraph.start or paragraph.sort_date, paragraph.end)
    return window.contains(paragraph.sort_date)


def _recency_key(paragraph: Paragraph) -> tuple[int, int, int, int, int]:
    # Undated paragraphs rank as most recent so last-n never drops them.
    if paragraph.sort_date is None:
        return (1, 0, 0, 0, paragraph.line)
    date = paragraph.sort_date
    return (0, date.year, date.month, date.day, paragraph.line)


def apply_filter(paragraphs: Sequence[Paragraph], plan: FilterPlan) -> list[Paragraph]:
    """Keep the window-overlapping paragraphs, then per source the n with
    the greatest sort date (ties broken by provenance line, keeping later).
    Input order is preserved; filtering never reorders.
    """
    kept = list(paragraphs)
    if plan.window is not None:
        kept = [p for p in kept if _in_window(p, plan.window)]

    needs_last = plan.last is not None or plan.per_source_last
    if not needs_last:
        return kept

    by_source: dict[str, list[int]] = {}
    for i, paragraph in enumerate(kept):
        by_source.setdefault(paragraph.source, []).append(i)

    drop: set[int] = set()
    for source, indices in by_source.items():
        n = plan.per_source_last.get(source, plan.last)
        if n is None or len(indices) <= n:
            continue
        ranked = sorted(indices, key=lambda i: _recency_key(kept[i]))
        drop.update(ranked[: len(indices) - n])
    return [p for i, p in enumerate(kept) if i not in drop]


def order_paragraphs(
    paragraphs: Sequence[Paragraph],
    order: OrderMode,
    source_positions: Mapping[str, int] | None = None,
) -> list[Paragraph]:
    """Deterministic ordering; static attributes sort before all dated
    paragraphs, summary scores between them ordered by label. Date ties
    are broken by the recipe-declared source order, then provenance line.
    """
    positions = source_positions or {}
    fallback = len(positions)

    def pos(source: str) -> int:
        return positions.get(source, fallback)

    def date_key(p: Paragraph) -> tuple[int, int, int]:
        d = p.sort_date
        return (d.year, d.month, d.day) if d is not None else (0, 0, 0)

    if order is OrderMode.BY_SOURCE:
        return sorted(
            paragraphs,
            key=lambda p: (pos(p.source), 0 if p.sort_date is None else 1, *date_key(p), p.line),
        )

    attrs = [p for p in paragraphs if p.sort_date is None and p.kind is not ParagraphKind.SUMMARY_SCORE]
    summaries = [p for p in paragraphs if p.sort_date is None and p.kind is ParagraphKind.SUMMARY_SCORE]
    dated = [p for p in paragraphs if p.sort_date is not None]
    attrs.sort(key=lambda p: (pos(p.source), p.line))
    summaries.sort(key=lambda p: p.source)
    dated.sort(key=lambda p: (*date_key(p), pos(p.source), p.line))
    return attrs + summaries + dated


# --- styling ----------------------------------------------------------------

def _date_pairs(paragraph: Paragraph) -> list[tuple[str, str]]:
    """Temporal context for key-value styles. The payload holds no date
    bindings, yet a dated paragraph without its date would be useless text,
    so spells lead with start/end (end omitted while ongoing) and point
    paragraphs with their month or year.
    """
    if paragraph.kind is ParagraphKind.SPELL:
        pairs = [("start", (paragraph.start or paragraph.sort_date).iso())]
        if paragraph.end is not None:
            pairs.append(("end", paragraph.end.iso()))
        return pairs
    if paragraph.sort_date is None:
        return []
    if paragraph.resolution is Resolution.MONTH:
        return [("month", paragraph.sort_date.iso_month())]
    if paragraph.resolution is Resolution.YEAR:
        return [("year", f"{paragraph.sort_date.year:04d}")]
    return [("date", paragraph.sort_date.iso())]


def style_paragraph(
    paragraph: Paragraph,
    style: StyleSpec,
    dictionaries: Mapping[str, ParsingDictionary],
    name_map: Mapping[PersonId, str] | None = None,
) -> str:
    """Write one paragraph as text: raw key-value pairs, dictionary-mapped
    pairs, or a filled sentence template.
    """
    if style.kind is StyleKind.RAW:
        pairs = _date_pairs(paragraph) + list(zip(paragraph.fields, paragraph.values))
        return ", ".join(f"{field}: {value}" for field, value in pairs)

    name = style.name or paragraph.source
    dictionary = dictionaries.get(name)
    if dictionary is None:
        raise UnknownDictionaryError(f"no parsing dictionary {name!r}")

    if style.kind is StyleKind.TEMPLATE:
        if dictionary.template is None:
            raise UnknownDictionaryError(f"dictionary {name!r} has no sentence template")
        return dictionary.template.render(paragraph, dictionary, name_map)

    parts = []
    for field, value in _date_pairs(paragraph):
        parts.append(f"{dictionary.display_field(field)}: {value}")
    for field, value in zip(paragraph.fields, paragraph.values):
        shown = dictionary.display_field(field)
        if field in dictionary.list_fields:
            ids = split_links(value)
            rendered = ", ".join(_display(i, name_map) for i in ids) if ids else "none"
        else:
            rendered = dictionary.map_value(field, value)
        parts.append(f"{shown}: {rendered}")
    return ", ".join(parts)


def estimate_tokens(text: str) -> int:
    """Deterministic token estimate: ceil(characters / 4). A documented
    approximation of subword tokenization, pluggable by replacing this
    function in assemble_book callers.
    """
    return (len(text) + 3) // 4


# --- assembly ---------------------------------------------------------------

@dataclass(frozen=True)
class NestedBookBlock:
    """A rendered book-within-a-book, attached under a parent paragraph.

    Carries the nested book's own manifest so the assembled book accounts
    for every sentence at every nesting depth exactly once.
    """

    person: PersonId
    title: str
    lines: tuple[str, ...]
    provenance: str
    depth: int
    manifest: tuple["ManifestEntry", ...] = ()


@dataclass
class RenderedParagraph:
    paragraph: Paragraph
    text: str
    annotation: str | None = None
    nested: tuple[NestedBookBlock, ...] = ()


@dataclass(frozen=True)
class ManifestEntry:
    provenance: str
    section: str
    kind: str
    depth: int
    subject: PersonId
    status: str  # "rendered" | "dropped"


@dataclass(frozen=True)
class Book:
    """Final rendered text for one focal person."""

    focal: PersonId
    text: str
    token_estimate: int
    manifest: tuple[ManifestEntry, ...]
    recipe: str
    recipe_version: int
    dropped: int = 0

    def lines(self) -> list[str]:
        return self.text.splitlines()


def _indent(lines: Iterable[str], prefix: str = "  ") -> list[str]:
    return [prefix + line if line else line for line in lines]


def _block_lines(rendered: RenderedParagraph) -> list[str]:
    lines = [rendered.text]
    if rendered.annotation:
        lines.append(rendered.annotation)
    for nested in rendered.nested:
        lines.append(nested.title)
        lines.extend(_indent(nested.lines))
    return lines


def assemble_book(
    focal: PersonId,
    rendered: Sequence[RenderedParagraph],
    how: HowSpec,
    budget: int | None,
    dictionaries: Mapping[str, ParsingDictionary],
    recipe_name: str,
    recipe_version: int = 1,
    token_estimator=estimate_tokens,
) -> Book:
    """Concatenate styled paragraphs into the final text under the budget.

    With section headers on, a header line (the source's dictionary display
    name) opens each run of same-source paragraphs, separated by blank
    lines. When the estimate exceeds the budget, dated paragraphs are
    dropped oldest-first (never static attributes) until the book fits.
    """
    blocks = list(rendered)
    dropped: list[RenderedParagraph] = []

    def section_of(paragraph: Paragraph) -> str:
        dictionary = dictionaries.get(paragraph.source)
        return dictionary.section_header() if dictionary is not None else paragraph.source

    def compose(current: list[RenderedParagraph]) -> str:
        lines: list[str] = []
        previous_source: str | None = None
        for block in current:
            source = block.paragraph.source
            if how.headers and source != previous_source:
                if lines:
                    lines.append("")
                lines.append(section_of(block.paragraph))
            previous_source = source
            lines.extend(_block_lines(block))
        return "\n".join(lines)

    text = compose(blocks)
    if budget is not None:
        while token_estimator(text) > budget:
            oldest_i = -1
            oldest_key: tuple[int, int, int, int] | None = None
            for i, block in enumerate(blocks):
                date = block.paragraph.sort_date
                if date is None:
                    continue
                key = (date.year, date.month, date.day, block.paragraph.line)
                if oldest_key is None or key < oldest_key:
                    oldest_key, oldest_i = key, i
            if oldest_i < 0:
                raise BudgetUnsatisfiableError(
                    f"book for {focal}: undroppable content estimates "
                    f"{token_estimator(text)} tokens over budget {budget}"
                )
            dropped.append(blocks.pop(oldest_i))
            text = compose(blocks)

    manifest: list[ManifestEntry] = []
    for status, group in (("rendered", blocks), ("dropped", dropped)):
        for block in group:
            paragraph = block.paragraph
            manifest.append(
                ManifestEntry(
                    paragraph.provenance,
                    section_of(paragraph),
                    paragraph.kind.value,
                    paragraph.nesting_depth,
                    paragraph.subject,
                    status,
                )
            )
            for nested in block.nested:
                manifest.append(
                    ManifestEntry(
                        nested.provenance,
                        section_of(paragraph),
                        ParagraphKind.NESTED_BOOK.value,
                        nested.depth,
                        nested.person,
                        status,
                    )
                )
                for entry in nested.manifest:
                    if status == "dropped" and entry.status == "rendered":
                        entry = ManifestEntry(
                            entry.provenance, entry.section, entry.kind,
                            entry.depth, entry.subject, "dropped",
                        )
                    manifest.append(entry)

    return Book(
        focal,
        text,
        token_estimator(text),
        tuple(manifest),
        recipe_name,
        recipe_version,
        len(dropped),
    )
