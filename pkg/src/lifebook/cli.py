"""Batch runner: load everything, write books in parallel, report throughput.

Work is sharded across forked workers over contiguous slices of the sorted
person list; each worker writes its own spill file and the shards are
concatenated in person-id order, so output bytes never depend on the degree
of parallelism. The run manifest is written last, as the completion marker:
no manifest means the run did not finish.

Exit codes: 0 success, 1 fatal configuration or data error, 2 completed
with per-person errors recorded in the manifest.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import multiprocessing
import os
import shutil
import statistics
import sys
import time
from dataclasses import dataclass, field as dataclass_field
from importlib import resources

from .errors import LifebookError
from .ingest import Reject, build_person_index, load_schema_registry, load_source, write_reject_log
from .model import PersonId
from .pipeline import BookPipeline
from .recipe import Recipe, parse_recipes, validate_recipe
from .render import Book, load_dictionaries
from .synth import SynthConfig, generate_population


def _fixture(name: str) -> str:
    return str(resources.files("lifebook").joinpath("fixtures", name))


def _resolve_recipe_path(spec: str) -> str:
    if os.path.exists(spec):
        return spec
    packaged = _fixture(os.path.join("recipes", f"{spec}.recipe"))
    if os.path.exists(packaged):
        return packaged
    raise LifebookError(f"no recipe file or packaged recipe named {spec!r}")


def _digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as handle:
        for block in iter(lambda: handle.read(1 << 20), b""):
            sha.update(block)
    return sha.hexdigest()


def load_scores_table(path: str, delimiter: str = ",") -> dict[PersonId, float]:
    scores: dict[PersonId, float] = {}
    with open(path, "r", encoding="utf-8") as handle:
        header = handle.readline()
        if not header:
            raise LifebookError(f"{path}: empty scores file")
        for line in handle:
            person, _, raw = line.rstrip("\n").partition(delimiter)
            if person:
                scores[person] = float(raw)
    return scores


def load_name_table(path: str, delimiter: str = ",") -> dict[PersonId, str]:
    names: dict[PersonId, str] = {}
    with open(path, "r", encoding="utf-8") as handle:
        handle.readline()
        for line in handle:
            person, _, name = line.rstrip("\n").partition(delimiter)
            if person and name:
                names[person] = name
    return names


@dataclass
class RunManifest:
    """Completion record of one batch; written only after all output is."""

    recipe: str
    recipe_version: int
    inputs: dict[str, str]
    person_count: int
    books_written: int
    books_errored: int
    errors: list[dict]
    truncations: list[dict]
    wall_seconds: float
    books_per_second: float
    parallelism: int
    format: str
    out: str
    setup_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "recipe": self.recipe,
            "recipe_version": self.recipe_version,
            "inputs": self.inputs,
            "person_count": self.person_count,
            "books_written": self.books_written,
            "books_errored": self.books_errored,
            "errors": self.errors,
            "truncations": self.truncations,
            "wall_seconds": self.wall_seconds,
            "books_per_second": self.books_per_second,
            "parallelism": self.parallelism,
            "format": self.format,
            "out": self.out,
            "setup_seconds": self.setup_seconds,
        }

    def write(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(self.to_dict(), handle, indent=2)
            handle.write("\n")


@dataclass
class RunContext:
    """Everything a batch needs after loading, shared read-only."""

    pipeline: BookPipeline
    recipes: dict[str, Recipe]
    main: Recipe
    digests: dict[str, str]
    rejects: list[Reject] = dataclass_field(default_factory=list)


class RecipeInvalidError(LifebookError):
    def __init__(self, issues):
        super().__init__("; ".join(str(issue) for issue in issues))
        self.issues = issues


def load_run_context(
    recipe_path: str,
    schemas_path: str,
    data_dir: str,
    dictionaries_path: str | None = None,
    scores_specs: tuple[tuple[str, str], ...] = (),
    names_path: str | None = None,
    delimiter: str = ",",
    extra_recipe_paths: tuple[str, ...] = (),
) -> RunContext:
    schemas = load_schema_registry(schemas_path)
    digests = {schemas_path: _digest(schemas_path)}

    registry: dict[str, Recipe] = {}
    main: Recipe | None = None
    for i, path in enumerate((recipe_path, *extra_recipe_paths)):
        with open(path, "r", encoding="utf-8") as handle:
            parsed = parse_recipes(handle.read())
        digests[path] = _digest(path)
        for name, parsed_recipe in parsed.items():
            registry.setdefault(name, parsed_recipe)
        if i == 0:
            main = next(iter(parsed.values()))
    assert main is not None

    dictionaries_path = dictionaries_path or _fixture("dictionaries.json")
    dictionaries = load_dictionaries(dictionaries_path)
    digests[dictionaries_path] = _digest(dictionaries_path)

    scores: dict[str, dict[PersonId, float]] = {}
    for label, path in scores_specs:
        scores[label] = load_scores_table(path, delimiter)
        digests[path] = _digest(path)

    names: dict[PersonId, str] = {}
    if names_path:
        names = load_name_table(names_path, delimiter)
        digests[names_path] = _digest(names_path)

    issues = []
    for current in registry.values():
        issues.extend(
            validate_recipe(current, schemas, dictionaries, registry, score_labels=tuple(scores))
        )
    if issues:
        raise RecipeInvalidError(issues)

    needed: set[str] = set()
    for current in registry.values():
        needed.update(sel.source for sel in current.what if sel.source in schemas)
        needed.update(who.source for who in current.who if who.source in schemas)

    sets = []
    rejects: list[Reject] = []
    for source in sorted(needed):
        path = os.path.join(data_dir, schemas[source].file_name)
        record_set = load_source(schemas[source], path, delimiter=delimiter)
        digests[path] = _digest(path)
        sets.append(record_set)
        rejects.extend(record_set.rejects)

    index = build_person_index(sets)
    pipeline = BookPipeline(
        index=index,
        recipes=registry,
        dictionaries=dictionaries,
        scores=scores,
        names=names,
    )
    return RunContext(pipeline, registry, main, digests, rejects)


# --- sharded rendering -------------------------------------------------------

# Populated in the parent before forking; workers inherit it read-only.
_WORKER_STATE: dict = {}


def _book_json(person: PersonId, book: Book) -> str:
    return json.dumps(
        {
            "person_id": person,
            "recipe": book.recipe,
            "token_estimate": book.token_estimate,
            "text": book.text,
        },
        ensure_ascii=False,
    )


def _run_chunk(chunk: tuple[int, list[PersonId]]) -> tuple[int, int, list, list]:
    chunk_id, persons = chunk
    pipe: BookPipeline = _WORKER_STATE["pipeline"]
    recipe: Recipe = _WORKER_STATE["recipe"]
    fmt: str = _WORKER_STATE["format"]
    out_dir: str = _WORKER_STATE["out_dir"]

    written = 0
    errors: list[dict] = []
    truncations: list[dict] = []
    shard = None
    try:
        if fmt == "lines":
            shard_path = os.path.join(out_dir, ".shards", f"shard_{chunk_id:05d}.jsonl")
            shard = open(shard_path, "w", encoding="utf-8")
        for person in persons:
            if not pipe.index.has_person(person):
                errors.append({"person": person, "reason": "unknown person"})
                continue
            try:
                book = pipe.write_book(recipe, person)
            except Exception as err:  # record, never abort the batch
                errors.append({"person": person, "reason": f"{type(err).__name__}: {err}"})
                continue
            if book.dropped:
                truncations.append({"person": person, "dropped_paragraphs": book.dropped})
            if fmt == "lines":
                shard.write(_book_json(person, book) + "\n")
            else:
                book_path = os.path.join(out_dir, "books", f"{person}.txt")
                with open(book_path, "w", encoding="utf-8") as handle:
                    handle.write(book.text + "\n" if book.text else book.text)
            written += 1
    finally:
        if shard is not None:
            shard.close()
    return chunk_id, written, errors, truncations


def _chunked(persons: list[PersonId], n: int) -> list[tuple[int, list[PersonId]]]:
    n = max(1, n)
    size = (len(persons) + n - 1) // n if persons else 0
    if size == 0:
        return [(0, [])]
    return [(i, persons[i * size : (i + 1) * size]) for i in range((len(persons) + size - 1) // size)]


def _render_books(
    pipeline: BookPipeline,
    recipe: Recipe,
    persons: list[PersonId],
    out_dir: str,
    fmt: str,
    parallelism: int,
) -> tuple[int, list, list, float]:
    """Render one batch; returns (written, errors, truncations, wall seconds)."""
    if fmt == "lines":
        os.makedirs(os.path.join(out_dir, ".shards"), exist_ok=True)
    else:
        os.makedirs(os.path.join(out_dir, "books"), exist_ok=True)

    _WORKER_STATE.clear()
    _WORKER_STATE.update(pipeline=pipeline, recipe=recipe, format=fmt, out_dir=out_dir)
    chunks = _chunked(persons, parallelism)

    start = time.perf_counter()
    if parallelism <= 1 or len(persons) <= 1:
        results = [_run_chunk(chunk) for chunk in chunks]
    else:
        context = multiprocessing.get_context("fork")
        with context.Pool(processes=min(parallelism, len(chunks))) as pool:
            results = pool.map(_run_chunk, chunks)

    results.sort(key=lambda r: r[0])
    written = sum(r[1] for r in results)
    errors = [e for r in results for e in r[2]]
    truncations = [t for r in results for t in r[3]]

    if fmt == "lines":
        shards_dir = os.path.join(out_dir, ".shards")
        archive = os.path.join(out_dir, "books.jsonl")
        with open(archive, "w", encoding="utf-8") as merged:
            for chunk_id, _ in chunks:
                shard_path = os.path.join(shards_dir, f"shard_{chunk_id:05d}.jsonl")
                if os.path.exists(shard_path):
                    with open(shard_path, "r", encoding="utf-8") as shard:
                        shutil.copyfileobj(shard, merged)
        shutil.rmtree(shards_dir, ignore_errors=True)
    wall = time.perf_counter() - start
    return written, errors, truncations, wall


def run_batch(
    recipe_path: str,
    schemas_path: str,
    data_dir: str,
    persons: str = "all",
    out_dir: str = "out",
    fmt: str = "lines",
    parallelism: int = 1,
    dictionaries_path: str | None = None,
    scores_specs: tuple[tuple[str, str], ...] = (),
    names_path: str | None = None,
    delimiter: str = ",",
) -> RunManifest:
    """Generate exactly one book (or one recorded error) per requested person.

    Fatal problems (bad recipe, missing source file) raise before any book
    is written; per-person problems are recorded and never abort the batch.
    """
    setup_start = time.perf_counter()
    context = load_run_context(
        _resolve_recipe_path(recipe_path),
        schemas_path,
        data_dir,
        dictionaries_path,
        scores_specs,
        names_path,
        delimiter,
    )

    if persons == "all":
        person_list = context.pipeline.index.persons()
        persons_digest = None
    else:
        with open(persons, "r", encoding="utf-8") as handle:
            person_list = sorted({line.strip() for line in handle if line.strip()})
        persons_digest = (persons, _digest(persons))

    os.makedirs(out_dir, exist_ok=True)
    manifest_path = os.path.join(out_dir, "manifest.json")
    # stale outputs from a previous (possibly crashed) run are never reused
    for stale in (manifest_path, os.path.join(out_dir, "books.jsonl")):
        if os.path.exists(stale):
            os.remove(stale)
    for stale_dir in (os.path.join(out_dir, "books"), os.path.join(out_dir, ".shards")):
        shutil.rmtree(stale_dir, ignore_errors=True)

    if context.rejects:
        write_reject_log(context.rejects, os.path.join(out_dir, "rejects.log"))

    digests = dict(context.digests)
    if persons_digest:
        digests[persons_digest[0]] = persons_digest[1]
    setup_seconds = time.perf_counter() - setup_start

    written, errors, truncations, wall = _render_books(
        context.pipeline, context.main, person_list, out_dir, fmt, parallelism
    )

    manifest = RunManifest(
        recipe=context.main.name,
        recipe_version=context.main.version,
        inputs=digests,
        person_count=len(person_list),
        books_written=written,
        books_errored=len(errors),
        errors=errors,
        truncations=truncations,
        wall_seconds=round(wall, 6),
        books_per_second=round(written / wall, 3) if wall > 0 else float(written),
        parallelism=parallelism,
        format=fmt,
        out=out_dir,
        setup_seconds=round(setup_seconds, 6),
    )
    manifest.write(manifest_path)
    return manifest


# --- bench -------------------------------------------------------------------

def bench(
    recipe_specs: list[str],
    schemas_path: str,
    data_dir: str,
    out_dir: str,
    repetitions: int = 3,
    sample: int = 1000,
    parallelism: int = 1,
    dictionaries_path: str | None = None,
    scores_specs: tuple[tuple[str, str], ...] = (),
    names_path: str | None = None,
    delimiter: str = ",",
    figure: bool = True,
) -> list[dict]:
    """Measure per-recipe production speed over a person sample.

    Sources are loaded once for all recipes; each measured run renders and
    serializes its books, so the rate covers the whole write path. Rates
    are the median over ``repetitions``; a single repetition is flagged
    low-confidence.
    """
    recipe_paths = [_resolve_recipe_path(spec) for spec in recipe_specs]
    context = load_run_context(
        recipe_paths[0],
        schemas_path,
        data_dir,
        dictionaries_path,
        scores_specs,
        names_path,
        delimiter,
        extra_recipe_paths=tuple(recipe_paths[1:]),
    )
    mains = []
    for path in recipe_paths:
        with open(path, "r", encoding="utf-8") as handle:
            mains.append(next(iter(parse_recipes(handle.read()).values())))

    persons = context.pipeline.index.persons()[: max(1, sample)]
    os.makedirs(out_dir, exist_ok=True)
    scratch = os.path.join(out_dir, ".bench_scratch")

    rows: list[dict] = []
    for main in mains:
        rates = []
        for _ in range(max(1, repetitions)):
            shutil.rmtree(scratch, ignore_errors=True)
            os.makedirs(scratch, exist_ok=True)
            written, errors, _, wall = _render_books(
                context.pipeline, main, persons, scratch, "lines", parallelism
            )
            rates.append(written / wall if wall > 0 else float(written))
        rows.append(
            {
                "recipe": main.name,
                "books": len(persons),
                "repetitions": max(1, repetitions),
                "books_per_second": round(statistics.median(rates), 3),
                "min_books_per_second": round(min(rates), 3),
                "max_books_per_second": round(max(rates), 3),
                "low_confidence": repetitions < 2,
            }
        )
    shutil.rmtree(scratch, ignore_errors=True)

    header = ["recipe", "books", "repetitions", "books_per_second",
              "min_books_per_second", "max_books_per_second", "low_confidence"]
    with open(os.path.join(out_dir, "bench.csv"), "w", encoding="utf-8") as handle:
        handle.write(",".join(header) + "\n")
        for row in rows:
            handle.write(",".join(str(row[key]).lower() if key == "low_confidence"
                                  else str(row[key]) for key in header) + "\n")
    with open(os.path.join(out_dir, "bench.jsonl"), "w", encoding="utf-8") as handle:
        for row in rows:
            handle.write(json.dumps(row) + "\n")
    if figure:
        from .report import render_throughput_figure

        render_throughput_figure(rows, os.path.join(out_dir, "bench.png"))
    return rows


def _print_bench_table(rows: list[dict]) -> None:
    width = max([len("recipe")] + [len(str(r["recipe"])) for r in rows])
    print(f"{'recipe':<{width}}  {'books/s':>10}  {'min':>10}  {'max':>10}  note")
    for row in rows:
        note = "low-confidence" if row["low_confidence"] else ""
        print(
            f"{row['recipe']:<{width}}  {row['books_per_second']:>10.1f}  "
            f"{row['min_books_per_second']:>10.1f}  {row['max_books_per_second']:>10.1f}  {note}"
        )


# --- argument parsing ----------------------------------------------------------

def _scores_pairs(values: list[str]) -> tuple[tuple[str, str], ...]:
    pairs = []
    for value in values or []:
        label, sep, path = value.partition("=")
        if not sep or not label or not path:
            raise LifebookError(f"--scores expects LABEL=PATH, got {value!r}")
        pairs.append((label, path))
    return tuple(pairs)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lifebook",
        description="Compile registry log files into per-person books of life.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic registry corpus")
    p_synth.add_argument("--out", required=True, help="output directory")
    p_synth.add_argument("--config", help="JSON file with SynthConfig fields")
    p_synth.add_argument("--count", type=int, help="number of persons")
    p_synth.add_argument("--years", help="window as START..END, e.g. 2010..2024")
    p_synth.add_argument("--seed", type=int, help="generator seed")

    p_validate = sub.add_parser("validate", help="parse and validate a recipe")
    p_validate.add_argument("--recipe", required=True)
    p_validate.add_argument("--schemas", required=True)
    p_validate.add_argument("--dictionaries")
    p_validate.add_argument("--scores", action="append", metavar="LABEL=PATH")

    p_run = sub.add_parser("run", help="write books for a person set")
    p_run.add_argument("--recipe", required=True)
    p_run.add_argument("--schemas", required=True)
    p_run.add_argument("--data", required=True)
    p_run.add_argument("--persons", default="all", help="'all' or a file of person ids")
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--format", choices=("files", "lines"), default="lines")
    p_run.add_argument("--parallelism", type=int, default=1)
    p_run.add_argument("--dictionaries")
    p_run.add_argument("--scores", action="append", metavar="LABEL=PATH")
    p_run.add_argument("--names")
    p_run.add_argument("--delimiter", default=",")

    p_bench = sub.add_parser("bench", help="measure per-recipe production speed")
    p_bench.add_argument("--recipes", nargs="+", required=True)
    p_bench.add_argument("--schemas", required=True)
    p_bench.add_argument("--data", required=True)
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--repetitions", type=int, default=3)
    p_bench.add_argument("--sample", type=int, default=1000)
    p_bench.add_argument("--parallelism", type=int, default=1)
    p_bench.add_argument("--dictionaries")
    p_bench.add_argument("--scores", action="append", metavar="LABEL=PATH")
    p_bench.add_argument("--names")
    p_bench.add_argument("--delimiter", default=",")
    p_bench.add_argument("--no-figure", action="store_true")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "synth":
            fields: dict = {}
            if args.config:
                with open(args.config, "r", encoding="utf-8") as handle:
                    fields.update(json.load(handle))
            if args.count is not None:
                fields["person_count"] = args.count
            if args.years:
                lo, _, hi = args.years.partition("..")
                fields["start_year"], fields["end_year"] = int(lo), int(hi)
            if args.seed is not None:
                fields["seed"] = args.seed
            config = SynthConfig(**fields)
            paths = generate_population(config, args.out)
            for name, path in sorted(paths.items()):
                print(f"{name}: {path}")
            return 0

        if args.command == "validate":
            recipe_path = _resolve_recipe_path(args.recipe)
            schemas = load_schema_registry(args.schemas)
            with open(recipe_path, "r", encoding="utf-8") as handle:
                registry = parse_recipes(handle.read())
            dictionaries = load_dictionaries(args.dictionaries or _fixture("dictionaries.json"))
            labels = tuple(label for label, _ in _scores_pairs(args.scores))
            main_recipe = next(iter(registry.values()))
            issues = validate_recipe(main_recipe, schemas, dictionaries, registry,
                                     score_labels=labels)
            if issues:
                for issue in issues:
                    print(issue, file=sys.stderr)
                return 1
            print(f"{main_recipe.name}: ok ({len(registry)} recipe(s))")
            return 0

        if args.command == "run":
            manifest = run_batch(
                args.recipe,
                args.schemas,
                args.data,
                persons=args.persons,
                out_dir=args.out,
                fmt=args.format,
                parallelism=args.parallelism,
                dictionaries_path=args.dictionaries,
                scores_specs=_scores_pairs(args.scores),
                names_path=args.names,
                delimiter=args.delimiter,
            )
            print(
                f"{manifest.recipe}: {manifest.books_written} books, "
                f"{manifest.books_errored} errors, "
                f"{manifest.books_per_second:.1f} books/s "
                f"(wall {manifest.wall_seconds:.2f}s, parallelism {manifest.parallelism})"
            )
            return 2 if manifest.books_errored else 0

        if args.command == "bench":
            rows = bench(
                args.recipes,
                args.schemas,
                args.data,
                args.out,
                repetitions=args.repetitions,
                sample=args.sample,
                parallelism=args.parallelism,
                dictionaries_path=args.dictionaries,
                scores_specs=_scores_pairs(args.scores),
                names_path=args.names,
                delimiter=args.delimiter,
                figure=not args.no_figure,
            )
            _print_bench_table(rows)
            return 0
    except LifebookError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    except OSError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
