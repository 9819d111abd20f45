"""Resolve the "who": expand from the focal person to linked persons.

Expansion is generic over any declared link field (housemates, coworkers,
neighbors). Nested books-within-books are guarded twice: an absolute
nesting-depth cap, and a path cut that downgrades any person already on
the current expansion path to an id listing, so cycles never recurse.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

from .extract import Paragraph, ParagraphKind
from .ingest import PersonIndex
from .model import PersonId
from .recipe import DEFAULT_DEPTH_CAP, WhoExpansion

# Renders the nested book for (person, recipe name, depth, path); a falsy
# result means nothing to show and downgrades the member to ids_only.
NestedRenderer = Callable[[PersonId, str, int, frozenset], object]


@dataclass(frozen=True)
class ParagraphExpansion:
    """What one who-entry contributed to one paragraph."""

    link_field: str
    ids_only: tuple[PersonId, ...]
    nested: tuple[tuple[PersonId, object], ...]


# paragraph position -> expansions, in who-entry order
ExpansionResult = dict[int, list[ParagraphExpansion]]


def _members(paragraph: Paragraph, link_field: str) -> tuple[PersonId, ...]:
    raw = paragraph.link_ids(link_field)
    seen = set()
    out = []
    for person in raw.split(";") if raw else ():
        if person and person != paragraph.subject and person not in seen:
            seen.add(person)
            out.append(person)
    return tuple(out)


def resolve_who(
    index: PersonIndex,
    focal: PersonId,
    paragraphs: Sequence[Paragraph],
    who: Sequence[WhoExpansion],
    path: frozenset,
    render_nested: NestedRenderer | None = None,
    default_depth_cap: int | None = DEFAULT_DEPTH_CAP,
) -> ExpansionResult:
    """Attach linked persons to each matching paragraph.

    ids_only mode lists the linked ids in payload order. Nested mode
    renders a book for each linked person one level deeper; persons on the
    expansion path, or past the depth cap, are downgraded to ids_only
    rather than dropped, so the link itself is never lost.
    """
    if focal not in path:
        raise ValueError("expansion path must contain the focal person")
    result: ExpansionResult = {}
    for expansion in who:
        limit = expansion.effective_depth(default_depth_cap)
        for position, paragraph in enumerate(paragraphs):
            if paragraph.source != expansion.source:
                continue
            if paragraph.kind not in (ParagraphKind.SPELL, ParagraphKind.EVENT):
                continue
            if paragraph.link_ids(expansion.link_field) is None:
                continue
            members = _members(paragraph, expansion.link_field)
            if not members:
                continue
            if expansion.mode == "ids_only" or render_nested is None:
                entry = ParagraphExpansion(expansion.link_field, members, ())
            else:
                child_depth = paragraph.nesting_depth + 1
                ids: list[PersonId] = []
                nested: list[tuple[PersonId, object]] = []
                for member in members:
                    blocked = member in path or (limit is not None and child_depth > limit)
                    if blocked:
                        ids.append(member)
                        continue
                    content = render_nested(member, expansion.nested_recipe or "", child_depth, path)
                    if content:
                        nested.append((member, content))
                    else:
                        ids.append(member)
                entry = ParagraphExpansion(expansion.link_field, tuple(ids), tuple(nested))
            result.setdefault(position, []).append(entry)
    return result


def annotation_text(
    expansion: ParagraphExpansion,
    field_display: str,
    name_map: Mapping[PersonId, str] | None = None,
) -> str | None:
    """The id listing line, e.g. ``household members: Mary, Anne``."""
    if not expansion.ids_only:
        return None
    names = [name_map.get(i, i) if name_map else i for i in expansion.ids_only]
    return f"{field_display}: {', '.join(names)}"
