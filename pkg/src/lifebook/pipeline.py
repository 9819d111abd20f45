"""Per-person book production: one recipe in, one rendered book out.

This is the composition point of the toolkit: extraction, linked-person
expansion and rendering are pure functions over the shared read-only index,
so books for different focal persons can be produced in parallel without
coordination.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Mapping

from .errors import UnknownSourceError
from .extract import (
    ChangeThresholds,
    attach_summary_score,
    extract_paragraphs,
)
from .ingest import PersonIndex
from .linked import annotation_text, resolve_who
from .model import PersonId
from .recipe import DEFAULT_DEPTH_CAP, Recipe
from .render import (
    Book,
    FilterPlan,
    NestedBookBlock,
    ParsingDictionary,
    RenderedParagraph,
    apply_filter,
    assemble_book,
    order_paragraphs,
    style_paragraph,
)


@dataclass
class BookPipeline:
    """Everything needed to write books, shared across focal persons."""

    index: PersonIndex
    recipes: Mapping[str, Recipe]
    dictionaries: Mapping[str, ParsingDictionary] = dataclass_field(default_factory=dict)
    scores: Mapping[str, Mapping[PersonId, float]] = dataclass_field(default_factory=dict)
    names: Mapping[PersonId, str] = dataclass_field(default_factory=dict)
    thresholds: ChangeThresholds = dataclass_field(default_factory=ChangeThresholds)
    default_depth_cap: int | None = DEFAULT_DEPTH_CAP

    def __post_init__(self) -> None:
        self._plans: dict[str, FilterPlan] = {}
        self._positions: dict[str, dict[str, int]] = {}

    def _plan(self, recipe: Recipe) -> FilterPlan:
        plan = self._plans.get(recipe.name)
        if plan is None:
            plan = self._plans[recipe.name] = FilterPlan.from_recipe(recipe)
        return plan

    def _source_positions(self, recipe: Recipe) -> dict[str, int]:
        positions = self._positions.get(recipe.name)
        if positions is None:
            positions = self._positions[recipe.name] = recipe.source_positions()
        return positions

    def write_book(self, recipe: Recipe, person: PersonId) -> Book:
        """Render the focal person's book; raises RenderError subclasses on
        unrenderable content, which batch runners record per person.
        """
        return self._book(recipe, person, 0, frozenset((person,)))

    def _book(self, recipe: Recipe, person: PersonId, depth: int, path: frozenset) -> Book:
        selections = []
        for selection in recipe.what:
            if selection.source in self.index.schemas:
                selections.append(selection)
            elif selection.source not in self.scores:
                raise UnknownSourceError(selection.source)
        paragraphs = extract_paragraphs(
            self.index, person, selections, self.thresholds, nesting_depth=depth
        )
        for selection in recipe.what:
            table = self.scores.get(selection.source)
            if table is not None:
                summary = attach_summary_score(person, table, selection.source, depth)
                if summary is not None:
                    paragraphs.append(summary)

        paragraphs = apply_filter(paragraphs, self._plan(recipe))
        paragraphs = order_paragraphs(paragraphs, recipe.how.order, self._source_positions(recipe))

        expansions = resolve_who(
            self.index,
            person,
            paragraphs,
            recipe.who,
            path,
            self._nested_renderer(),
            self.default_depth_cap,
        )

        rendered: list[RenderedParagraph] = []
        for position, paragraph in enumerate(paragraphs):
            style = recipe.how.style_for(paragraph.source)
            text = style_paragraph(paragraph, style, self.dictionaries, self.names)
            annotation_lines: list[str] = []
            nested_blocks: list[NestedBookBlock] = []
            for expansion in expansions.get(position, []):
                display = self._field_display(paragraph.source, expansion.link_field)
                note = annotation_text(expansion, display, self.names)
                if note:
                    annotation_lines.append(note)
                for member, nested_book in expansion.nested:
                    nested_blocks.append(
                        NestedBookBlock(
                            person=member,
                            title=f"About {self.names.get(member, member)}:",
                            lines=tuple(nested_book.text.splitlines()),
                            provenance=f"nested:{nested_book.recipe}:{member}",
                            depth=paragraph.nesting_depth + 1,
                            manifest=nested_book.manifest,
                        )
                    )
            rendered.append(
                RenderedParagraph(
                    paragraph,
                    text,
                    "; ".join(annotation_lines) if annotation_lines else None,
                    tuple(nested_blocks),
                )
            )

        # The focal budget governs the whole book; nested books are embedded
        # content and are not truncated separately.
        budget = recipe.budget if depth == 0 else None
        return assemble_book(
            person,
            rendered,
            recipe.how,
            budget,
            self.dictionaries,
            recipe.name,
            recipe.version,
        )

    def _nested_renderer(self):
        def render_nested(
            member: PersonId, recipe_name: str, depth: int, path: frozenset
        ) -> Book | None:
            nested_recipe = self.recipes.get(recipe_name)
            if nested_recipe is None:
                return None
            book = self._book(nested_recipe, member, depth, path | {member})
            return book if book.text else None

        return render_nested

    def _field_display(self, source: str, link_field: str) -> str:
        dictionary = self.dictionaries.get(source)
        if dictionary is not None:
            return dictionary.display_field(link_field)
        return link_field
