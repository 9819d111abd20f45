"""The recipe document: declarative what/who/how choices for one book.

Grammar (version 1). Line-oriented, 2-space indentation per level; blank
lines, ``#`` comment lines and trailing `` # …`` comments are ignored.
A file holds one or more named recipe blocks; later blocks are typically
nested book definitions.

    recipe_version: 1

    recipe: <name>
    budget: <int>                          # max tokens, default 1000

    what:
      - <source>                           # bare selection
      - <source>:                          # selection with options
        window: YYYY-MM-DD..YYYY-MM-DD
        changes_only: true
        last: <n>                          # per-source filter override
        fields: <field>, <field>, ...      # payload projection

    who:
      - <source>.<link_field>:
        mode: ids_only | nested <recipe>
        depth: <n>

    how:
      order: chronological | by_source
      headers: on | off
      filter:
        last: <n>
        window: YYYY-MM-DD..YYYY-MM-DD
      style:
        default: raw
        <source>: raw | dictionary [<name>] | template [<name>]

Parsing is total on this grammar: every rejection carries a line number.
``parse_recipes(render_recipes(rs)) == rs`` holds for all parsed recipes.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field as dataclass_field
from typing import Mapping

from .errors import RecipeSyntaxError, UnknownRecipeKeyError
from .ingest import parse_date
from .model import DateWindow, SourceRole, SourceSchema

RECIPE_VERSION = 1
DEFAULT_BUDGET = 1000
DEFAULT_DEPTH_CAP = 1


class OrderMode(enum.Enum):
    CHRONOLOGICAL = "chronological"
    BY_SOURCE = "by_source"


class StyleKind(enum.Enum):
    RAW = "raw"
    DICTIONARY = "dictionary"
    TEMPLATE = "template"


@dataclass(frozen=True)
class StyleSpec:
    kind: StyleKind = StyleKind.RAW
    name: str | None = None  # dictionary/template name; None means the source's own name

    def render(self) -> str:
        if self.name is None:
            return self.kind.value
        return f"{self.kind.value} {self.name}"


RAW_STYLE = StyleSpec(StyleKind.RAW)


@dataclass(frozen=True)
class SourceSelection:
    source: str
    window: DateWindow | None = None
    changes_only: bool = False
    last: int | None = None
    fields: tuple[str, ...] | None = None


@dataclass(frozen=True)
class WhoExpansion:
    source: str
    link_field: str
    mode: str = "ids_only"  # "ids_only" | "nested"
    nested_recipe: str | None = None
    max_depth: int | None = None  # None defers to the global depth cap

    def effective_depth(self, default_cap: int | None = DEFAULT_DEPTH_CAP) -> int | None:
        return self.max_depth if self.max_depth is not None else default_cap


@dataclass(frozen=True)
class FilterSpec:
    last: int | None = None
    window: DateWindow | None = None


@dataclass(frozen=True)
class HowSpec:
    filter: FilterSpec = FilterSpec()
    order: OrderMode = OrderMode.CHRONOLOGICAL
    styles: Mapping[str, StyleSpec] = dataclass_field(default_factory=dict)
    default_style: StyleSpec = RAW_STYLE
    headers: bool = False

    def style_for(self, source: str) -> StyleSpec:
        return self.styles.get(source, self.default_style)


@dataclass(frozen=True)
class Recipe:
    name: str
    what: tuple[SourceSelection, ...]
    who: tuple[WhoExpansion, ...] = ()
    how: HowSpec = HowSpec()
    budget: int = DEFAULT_BUDGET
    version: int = RECIPE_VERSION

    def selection_for(self, source: str) -> SourceSelection | None:
        for selection in self.what:
            if selection.source == source:
                return selection
        return None

    def source_positions(self) -> dict[str, int]:
        return {sel.source: i for i, sel in enumerate(self.what)}


# --- parsing ---------------------------------------------------------------

@dataclass
class _Line:
    number: int
    indent: int
    text: str


class _Cursor:
    def __init__(self, lines: list[_Line]):
        self.lines = lines
        self.pos = 0

    def peek(self) -> _Line | None:
        return self.lines[self.pos] if self.pos < len(self.lines) else None

    def take(self) -> _Line:
        line = self.lines[self.pos]
        self.pos += 1
        return line


def _tokenize(text: str) -> list[_Line]:
    out = []
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.rstrip()
        if " #" in stripped:  # trailing comment; no grammar value contains '#'
            stripped = stripped[: stripped.index(" #")].rstrip()
        if not stripped or stripped.lstrip().startswith("#"):
            continue
        if "\t" in raw[: len(raw) - len(raw.lstrip())]:
            raise RecipeSyntaxError("tabs are not allowed in indentation", line=number)
        indent = len(stripped) - len(stripped.lstrip(" "))
        if indent % 2 != 0:
            raise RecipeSyntaxError(f"indentation must be a multiple of 2, found {indent}", line=number)
        out.append(_Line(number, indent, stripped.lstrip(" ")))
    return out


def _split_key(line: _Line) -> tuple[str, str]:
    if ":" not in line.text:
        raise RecipeSyntaxError(f"expected 'key: value', found {line.text!r}", line=line.number)
    key, _, value = line.text.partition(":")
    return key.strip(), value.strip()


def _parse_int(value: str, line: _Line, *, minimum: int = 1) -> int:
    try:
        parsed = int(value)
    except ValueError:
        raise RecipeSyntaxError(f"expected an integer, found {value!r}", line=line.number) from None
    if parsed < minimum:
        raise RecipeSyntaxError(f"value must be >= {minimum}, found {parsed}", line=line.number)
    return parsed


def _parse_bool(value: str, line: _Line) -> bool:
    lowered = value.lower()
    if lowered in ("true", "on", "yes"):
        return True
    if lowered in ("false", "off", "no"):
        return False
    raise RecipeSyntaxError(f"expected on/off, found {value!r}", line=line.number)


def _parse_window(value: str, line: _Line) -> DateWindow:
    if ".." not in value:
        raise RecipeSyntaxError(f"expected DATE..DATE, found {value!r}", line=line.number)
    lo, _, hi = value.partition("..")
    try:
        return DateWindow(parse_date(lo.strip()), parse_date(hi.strip()))
    except Exception as err:
        raise RecipeSyntaxError(f"bad window {value!r}: {err}", line=line.number) from None


def _parse_style(value: str, line: _Line) -> StyleSpec:
    parts = value.split()
    if not parts:
        raise RecipeSyntaxError("empty style", line=line.number)
    try:
        kind = StyleKind(parts[0])
    except ValueError:
        raise RecipeSyntaxError(f"unknown style {parts[0]!r}", line=line.number) from None
    if len(parts) == 1:
        return StyleSpec(kind)
    if len(parts) == 2 and kind is not StyleKind.RAW:
        return StyleSpec(kind, parts[1])
    raise RecipeSyntaxError(f"malformed style {value!r}", line=line.number)


def _parse_what_entry(cursor: _Cursor, line: _Line) -> SourceSelection:
    body = line.text[2:].strip()
    if body.endswith(":"):
        source = body[:-1].strip()
        options: dict[str, object] = {}
        while (nxt := cursor.peek()) is not None and nxt.indent >= 4:
            opt = cursor.take()
            key, value = _split_key(opt)
            if key == "window":
                options["window"] = _parse_window(value, opt)
            elif key == "changes_only":
                options["changes_only"] = _parse_bool(value, opt)
            elif key == "last":
                options["last"] = _parse_int(value, opt)
            elif key == "fields":
                names = tuple(f.strip() for f in value.split(",") if f.strip())
                if not names:
                    raise RecipeSyntaxError("empty fields list", line=opt.number)
                options["fields"] = names
            else:
                raise UnknownRecipeKeyError(f"what.{source}.{key}", line=opt.number)
        return SourceSelection(source=source, **options)
    if not body:
        raise RecipeSyntaxError("empty what entry", line=line.number)
    return SourceSelection(source=body)


def _parse_who_entry(cursor: _Cursor, line: _Line) -> WhoExpansion:
    body = line.text[2:].strip()
    has_options = body.endswith(":")
    if has_options:
        body = body[:-1].strip()
    if "." not in body:
        raise RecipeSyntaxError(
            f"who entry must be <source>.<link_field>, found {body!r}", line=line.number
        )
    source, _, link_field = body.partition(".")
    mode = "ids_only"
    nested: str | None = None
    depth: int | None = None
    if has_options:
        while (nxt := cursor.peek()) is not None and nxt.indent >= 4:
            opt = cursor.take()
            key, value = _split_key(opt)
            if key == "mode":
                parts = value.split()
                if parts == ["ids_only"]:
                    mode, nested = "ids_only", None
                elif len(parts) == 2 and parts[0] == "nested":
                    mode, nested = "nested", parts[1]
                else:
                    raise RecipeSyntaxError(
                        f"mode must be 'ids_only' or 'nested <recipe>', found {value!r}",
                        line=opt.number,
                    )
            elif key == "depth":
                depth = _parse_int(value, opt)
            else:
                raise UnknownRecipeKeyError(f"who.{body}.{key}", line=opt.number)
    return WhoExpansion(source, link_field, mode, nested, depth)


def _parse_filter(cursor: _Cursor) -> FilterSpec:
    last: int | None = None
    window: DateWindow | None = None
    while (nxt := cursor.peek()) is not None and nxt.indent >= 4:
        opt = cursor.take()
        key, value = _split_key(opt)
        if key == "last":
            last = _parse_int(value, opt)
        elif key == "window":
            window = _parse_window(value, opt)
        else:
            raise UnknownRecipeKeyError(f"how.filter.{key}", line=opt.number)
    return FilterSpec(last, window)


def _parse_how(cursor: _Cursor) -> HowSpec:
    filter_spec = FilterSpec()
    order = OrderMode.CHRONOLOGICAL
    styles: dict[str, StyleSpec] = {}
    default_style = RAW_STYLE
    headers = False
    while (nxt := cursor.peek()) is not None and nxt.indent == 2:
        line = cursor.take()
        key, value = _split_key(line)
        if key == "order":
            try:
                order = OrderMode(value)
            except ValueError:
                raise RecipeSyntaxError(f"unknown order {value!r}", line=line.number) from None
        elif key == "headers":
            headers = _parse_bool(value, line)
        elif key == "filter":
            if value:
                raise RecipeSyntaxError("filter takes an indented block", line=line.number)
            filter_spec = _parse_filter(cursor)
        elif key == "style":
            if value:
                raise RecipeSyntaxError("style takes an indented block", line=line.number)
            while (nxt := cursor.peek()) is not None and nxt.indent >= 4:
                entry = cursor.take()
                source, style_value = _split_key(entry)
                style = _parse_style(style_value, entry)
                if source == "default":
                    default_style = style
                else:
                    styles[source] = style
        else:
            raise UnknownRecipeKeyError(f"how.{key}", line=line.number)
    return HowSpec(filter_spec, order, styles, default_style, headers)


def _parse_block(cursor: _Cursor, name: str, version: int) -> Recipe:
    budget = DEFAULT_BUDGET
    what: list[SourceSelection] = []
    who: list[WhoExpansion] = []
    how = HowSpec()
    while (nxt := cursor.peek()) is not None:
        if nxt.indent == 0 and nxt.text.startswith("recipe:"):
            break
        line = cursor.take()
        if line.indent != 0:
            raise RecipeSyntaxError(f"unexpected indentation under recipe {name!r}", line=line.number)
        key, value = _split_key(line)
        if key == "budget":
            budget = _parse_int(value, line)
        elif key == "what":
            while (nxt := cursor.peek()) is not None and nxt.indent == 2:
                entry = cursor.take()
                if not entry.text.startswith("- "):
                    raise RecipeSyntaxError(
                        f"what entries start with '- ', found {entry.text!r}", line=entry.number
                    )
                selection = _parse_what_entry(cursor, entry)
                if any(sel.source == selection.source for sel in what):
                    raise RecipeSyntaxError(
                        f"source {selection.source!r} selected twice", line=entry.number
                    )
                what.append(selection)
        elif key == "who":
            while (nxt := cursor.peek()) is not None and nxt.indent == 2:
                entry = cursor.take()
                if not entry.text.startswith("- "):
                    raise RecipeSyntaxError(
                        f"who entries start with '- ', found {entry.text!r}", line=entry.number
                    )
                who.append(_parse_who_entry(cursor, entry))
        elif key == "how":
            how = _parse_how(cursor)
        else:
            raise UnknownRecipeKeyError(key, line=line.number)
    if not what:
        raise RecipeSyntaxError(f"recipe {name!r} selects no sources", line=cursor.lines[0].number)
    return Recipe(name, tuple(what), tuple(who), how, budget, version)


def parse_recipes(text: str) -> dict[str, Recipe]:
    """Parse a recipe document into its named recipes, in file order."""
    cursor = _Cursor(_tokenize(text))
    first = cursor.peek()
    if first is None:
        raise RecipeSyntaxError("empty recipe document", line=1)
    key, value = _split_key(first)
    if key != "recipe_version":
        raise RecipeSyntaxError("document must start with 'recipe_version: 1'", line=first.number)
    cursor.take()
    version = _parse_int(value, first)
    if version != RECIPE_VERSION:
        raise RecipeSyntaxError(f"unsupported recipe_version {version}", line=first.number)

    recipes: dict[str, Recipe] = {}
    while (line := cursor.peek()) is not None:
        if line.indent != 0:
            raise RecipeSyntaxError("expected 'recipe: <name>' at column 1", line=line.number)
        key, value = _split_key(line)
        if key != "recipe":
            raise UnknownRecipeKeyError(key, line=line.number)
        cursor.take()
        if not value:
            raise RecipeSyntaxError("recipe needs a name", line=line.number)
        if value in recipes:
            raise RecipeSyntaxError(f"recipe {value!r} defined twice", line=line.number)
        recipes[value] = _parse_block(cursor, value, version)
    if not recipes:
        raise RecipeSyntaxError("document defines no recipes", line=first.number)
    return recipes


def parse_recipe(text: str) -> Recipe:
    """Parse a recipe document and return its first (main) recipe."""
    return next(iter(parse_recipes(text).values()))


# --- canonical rendering ----------------------------------------------------

def render_recipe(recipe: Recipe) -> str:
    lines = [f"recipe: {recipe.name}"]
    if recipe.budget != DEFAULT_BUDGET:
        lines.append(f"budget: {recipe.budget}")
    lines.append("what:")
    for sel in recipe.what:
        options = []
        if sel.window is not None:
            options.append(f"window: {sel.window}")
        if sel.changes_only:
            options.append("changes_only: true")
        if sel.last is not None:
            options.append(f"last: {sel.last}")
        if sel.fields is not None:
            options.append(f"fields: {', '.join(sel.fields)}")
        if options:
            lines.append(f"  - {sel.source}:")
            lines.extend(f"    {opt}" for opt in options)
        else:
            lines.append(f"  - {sel.source}")
    if recipe.who:
        lines.append("who:")
        for who in recipe.who:
            options = []
            if who.mode == "nested":
                options.append(f"mode: nested {who.nested_recipe}")
            if who.max_depth is not None:
                options.append(f"depth: {who.max_depth}")
            if options:
                lines.append(f"  - {who.source}.{who.link_field}:")
                lines.extend(f"    {opt}" for opt in options)
            else:
                lines.append(f"  - {who.source}.{who.link_field}")
    how = recipe.how
    how_lines = []
    if how.order is not OrderMode.CHRONOLOGICAL:
        how_lines.append(f"  order: {how.order.value}")
    if how.headers:
        how_lines.append("  headers: on")
    if how.filter.last is not None or how.filter.window is not None:
        how_lines.append("  filter:")
        if how.filter.last is not None:
            how_lines.append(f"    last: {how.filter.last}")
        if how.filter.window is not None:
            how_lines.append(f"    window: {how.filter.window}")
    if how.styles or how.default_style != RAW_STYLE:
        how_lines.append("  style:")
        if how.default_style != RAW_STYLE:
            how_lines.append(f"    default: {how.default_style.render()}")
        for source, style in how.styles.items():
            how_lines.append(f"    {source}: {style.render()}")
    if how_lines:
        lines.append("how:")
        lines.extend(how_lines)
    return "\n".join(lines) + "\n"


def render_recipes(recipes: Mapping[str, Recipe]) -> str:
    blocks = [f"recipe_version: {RECIPE_VERSION}\n"]
    blocks.extend(render_recipe(recipe) for recipe in recipes.values())
    return "\n".join(blocks)


# --- validation -------------------------------------------------------------

@dataclass(frozen=True)
class ValidationIssue:
    code: str
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.code} at {self.path}: {self.message}"


def validate_recipe(
    recipe: Recipe,
    schemas: Mapping[str, SourceSchema],
    dictionaries: Mapping[str, object] | None = None,
    recipes: Mapping[str, Recipe] | None = None,
    score_labels: tuple[str, ...] = (),
    default_depth_cap: int | None = DEFAULT_DEPTH_CAP,
) -> list[ValidationIssue]:
    """Resolve every reference in the recipe; an empty list means valid.

    The nested-recipe graph is checked for unbounded recursion: cycles are
    allowed only when a finite depth bound cuts them, either an explicit
    ``depth`` or the global default cap.
    """
    dictionaries = dictionaries or {}
    recipes = dict(recipes or {})
    recipes.setdefault(recipe.name, recipe)
    issues: list[ValidationIssue] = []

    def walk(current: Recipe, seen: set[str]) -> None:
        for sel in current.what:
            path = f"{current.name}.what.{sel.source}"
            if sel.source in score_labels:
                if sel.changes_only or sel.fields is not None:
                    issues.append(
                        ValidationIssue(
                            "invalid_selection", path, "score sources take no options"
                        )
                    )
                continue
            schema = schemas.get(sel.source)
            if schema is None:
                issues.append(ValidationIssue("unknown_source", path, f"no source {sel.source!r}"))
                continue
            if sel.changes_only and schema.role not in (
                SourceRole.MONTHLY_EVENTS,
                SourceRole.YEARLY_ATTRIBUTES,
            ):
                issues.append(
                    ValidationIssue(
                        "invalid_selection",
                        path,
                        f"changes_only needs a monthly or yearly source, {sel.source} is {schema.role.value}",
                    )
                )
            if sel.fields is not None:
                known = set(schema.payload_fields)
                for name in sel.fields:
                    if name not in known:
                        issues.append(
                            ValidationIssue("unknown_field", f"{path}.{name}", "not a payload field")
                        )
        for who in current.who:
            path = f"{current.name}.who.{who.source}.{who.link_field}"
            schema = schemas.get(who.source)
            if schema is None:
                issues.append(ValidationIssue("unknown_source", path, f"no source {who.source!r}"))
            elif who.link_field not in schema.link_fields:
                issues.append(
                    ValidationIssue(
                        "unknown_link_field", path, f"{who.link_field!r} is not a declared link field"
                    )
                )
            if who.mode == "nested":
                nested = recipes.get(who.nested_recipe or "")
                if nested is None:
                    issues.append(
                        ValidationIssue("unknown_recipe", path, f"no recipe {who.nested_recipe!r}")
                    )
                elif nested.name not in seen:
                    walk(nested, seen | {nested.name})
        for source, style in list(current.how.styles.items()) + [("default", current.how.default_style)]:
            if style.kind is StyleKind.RAW:
                continue
            if style.name is None and source == "default":
                issues.append(
                    ValidationIssue(
                        "unknown_dictionary",
                        f"{current.name}.how.style.default",
                        "default style needs an explicit dictionary name",
                    )
                )
                continue
            name = style.name or source
            entry = dictionaries.get(name)
            if entry is None:
                issues.append(
                    ValidationIssue(
                        "unknown_dictionary",
                        f"{current.name}.how.style.{source}",
                        f"no parsing dictionary {name!r}",
                    )
                )
            elif style.kind is StyleKind.TEMPLATE and getattr(entry, "template", None) is None:
                issues.append(
                    ValidationIssue(
                        "unknown_template",
                        f"{current.name}.how.style.{source}",
                        f"dictionary {name!r} has no sentence template",
                    )
                )

    walk(recipe, {recipe.name})

    # Unbounded recursion: a cycle in the nested-recipe graph none of whose
    # traversal is cut by a finite depth bound.
    if default_depth_cap is None:
        unbounded: dict[str, set[str]] = {}
        for name, current in recipes.items():
            for who in current.who:
                if who.mode == "nested" and who.nested_recipe in recipes:
                    if who.effective_depth(default_depth_cap) is None:
                        unbounded.setdefault(name, set()).add(who.nested_recipe)

        def on_cycle(start: str) -> bool:
            stack, seen = [start], set()
            while stack:
                node = stack.pop()
                for nxt in unbounded.get(node, ()):
                    if nxt == start:
                        return True
                    if nxt not in seen:
                        seen.add(nxt)
                        stack.append(nxt)
            return False

        for name in recipes:
            if on_cycle(name):
                issues.append(
                    ValidationIssue(
                        "unbounded_recursion",
                        name,
                        "nested recipe cycle with no depth bound",
                    )
                )
                break

    return issues
