"""lifebook: compile heterogeneous registry log files into per-person
plain-text books of life, driven by declarative recipes.

The public surface mirrors the processing pipeline: ingest delimited
sources against declared schemas, index them per person, extract candidate
paragraphs (optionally reduced to changes), expand to linked persons, and
render filtered/ordered/styled text under a token budget. A deterministic
synthetic registry generator makes the whole pipeline testable without
confidential data.
"""

from .errors import LifebookError
from .extract import (
    ChangeThresholds,
    Paragraph,
    ParagraphKind,
    attach_summary_score,
    detect_education_changes,
    detect_employment_changes,
    extract_paragraphs,
)
from .ingest import (
    PersonIndex,
    RecordSet,
    build_person_index,
    load_schema_registry,
    load_source,
    query_records,
    write_source,
)
from .linked import ParagraphExpansion, resolve_who
from .model import (
    AttributeRecord,
    CivilDate,
    DateWindow,
    EventRecord,
    FieldKind,
    FieldSpec,
    PersonId,
    Resolution,
    SourceRole,
    SourceSchema,
    SpellRecord,
    compare_dates,
    validate_spell,
)
from .pipeline import BookPipeline
from .recipe import (
    HowSpec,
    OrderMode,
    Recipe,
    SourceSelection,
    StyleKind,
    StyleSpec,
    WhoExpansion,
    parse_recipe,
    parse_recipes,
    render_recipe,
    render_recipes,
    validate_recipe,
)
from .render import (
    Book,
    FilterPlan,
    ParsingDictionary,
    SentenceTemplate,
    apply_filter,
    assemble_book,
    estimate_tokens,
    load_dictionaries,
    order_paragraphs,
    style_paragraph,
)
from .synth import SynthConfig, generate_population, standard_schemas

__version__ = "0.1.0"

__all__ = [
    "AttributeRecord",
    "Book",
    "BookPipeline",
    "ChangeThresholds",
    "CivilDate",
    "DateWindow",
    "EventRecord",
    "FieldKind",
    "FieldSpec",
    "FilterPlan",
    "HowSpec",
    "LifebookError",
    "OrderMode",
    "Paragraph",
    "ParagraphExpansion",
    "ParagraphKind",
    "ParsingDictionary",
    "PersonId",
    "PersonIndex",
    "Recipe",
    "RecordSet",
    "Resolution",
    "SentenceTemplate",
    "SourceRole",
    "SourceSchema",
    "SourceSelection",
    "SpellRecord",
    "StyleKind",
    "StyleSpec",
    "SynthConfig",
    "WhoExpansion",
    "apply_filter",
    "assemble_book",
    "attach_summary_score",
    "build_person_index",
    "compare_dates",
    "detect_education_changes",
    "detect_employment_changes",
    "estimate_tokens",
    "extract_paragraphs",
    "generate_population",
    "load_dictionaries",
    "load_schema_registry",
    "load_source",
    "order_paragraphs",
    "parse_recipe",
    "parse_recipes",
    "query_records",
    "render_recipe",
    "render_recipes",
    "resolve_who",
    "standard_schemas",
    "style_paragraph",
    "validate_recipe",
    "validate_spell",
    "write_source",
]
