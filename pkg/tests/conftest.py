"""Shared fixtures: paper-style micro corpora and a small synthetic corpus."""

from __future__ import annotations

import pytest

from lifebook import (
    CivilDate,
    FieldKind,
    FieldSpec,
    SourceRole,
    SourceSchema,
    build_person_index,
    load_dictionaries,
    load_source,
    standard_schemas,
)
from lifebook.cli import _fixture


@pytest.fixture(scope="session")
def schemas():
    return standard_schemas()


@pytest.fixture(scope="session")
def dictionaries():
    return load_dictionaries(_fixture("dictionaries.json"))


@pytest.fixture()
def names():
    return {"J01": "Johan", "M01": "Mary", "A01": "Anne", "JO1": "Josephine", "R01": "Rick"}


HOUSEHOLD_HEADER = "person_id,hh_id,household_type,person_role,start,end,co_members"

# Four household rows: Johan's three spells (family, alone, new family) and
# Mary's ongoing spell with Anne after the split.
FIGURE_ROWS = [
    "J01,H0001,3,1,2019-01-05,2020-05-02,M01;A01",
    "J01,H0002,1,4,2020-05-03,2021-03-09,",
    "J01,H0003,2,2,2021-03-10,,JO1",
    "M01,H0001,4,1,2020-05-03,,A01",
]


@pytest.fixture()
def household_file(tmp_path):
    path = tmp_path / "household.csv"
    path.write_text(HOUSEHOLD_HEADER + "\n" + "\n".join(FIGURE_ROWS) + "\n", encoding="utf-8")
    return str(path)


@pytest.fixture()
def household_set(schemas, household_file):
    return load_source(schemas["household"], household_file)


@pytest.fixture()
def residence_schema():
    return SourceSchema(
        name="residence",
        role=SourceRole.SPELLS,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("municipality", FieldKind.INT),
            FieldSpec("start", FieldKind.DATE),
            FieldSpec("end", FieldKind.DATE),
        ),
        start_field="start",
        end_field="end",
    )


@pytest.fixture()
def james_index(residence_schema, tmp_path):
    """Three residence spells: Amsterdam, Leeuwarden, then Amsterdam again
    from 2019-12-02 onward."""
    path = tmp_path / "residence.csv"
    path.write_text(
        "person_id,municipality,start,end\n"
        "JAMES,11,2000-01-01,2019-06-12\n"
        "JAMES,80,2019-06-13,2019-12-01\n"
        "JAMES,11,2019-12-02,\n",
        encoding="utf-8",
    )
    return build_person_index([load_source(residence_schema, str(path))])


def make_date(text: str) -> CivilDate:
    year, month, day = text.split("-")
    return CivilDate(int(year), int(month), int(day))


@pytest.fixture(scope="session")
def small_corpus(tmp_path_factory):
    """A 120-person synthetic corpus shared by integration-level tests."""
    from lifebook import SynthConfig, generate_population

    out = tmp_path_factory.mktemp("small_corpus")
    config = SynthConfig(person_count=120, start_year=2012, end_year=2022, seed=1234)
    paths = generate_population(config, str(out))
    return {"dir": str(out), "paths": paths, "config": config}
