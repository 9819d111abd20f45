"""Deterministic synthetic registry generator.

Produces an internally consistent set of source files shaped like a real
administrative registry: static demographics, daily household and address
spells, monthly employment slips, yearly education snapshots, plus a score
table and a display-name table. Households are simulated as shared entities
in a single chronological event loop, so housemate symmetry and
gap-free per-person spell timelines hold by construction, not by luck.

Output is a pure function of the config, including the seed. No attempt is
made at demographic realism; the point is shape and consistency.
"""

from __future__ import annotations

import datetime
import heapq
import os
import random
from dataclasses import dataclass

from .ingest import write_schema_registry
from .model import CivilDate, FieldKind, FieldSpec, SourceRole, SourceSchema

GIVEN_NAMES = (
    "Johan", "Mary", "Anne", "Josephine", "Rick", "James", "Lisa", "Pieter",
    "Sanne", "Daan", "Emma", "Lucas", "Julia", "Milan", "Sophie", "Thijs",
    "Fleur", "Bram", "Noor", "Sem", "Eva", "Ruben", "Tess", "Koen", "Lotte",
    "Jesse", "Mila", "Timo", "Roos", "Stijn", "Vera", "Niels", "Iris", "Guus",
    "Femke", "Arjen", "Ilse", "Wouter", "Marit", "Casper",
)

MUNICIPALITIES = {
    "11": "Amsterdam",
    "14": "Groningen",
    "28": "Utrecht",
    "34": "Almere",
    "44": "Eindhoven",
    "59": "Rotterdam",
    "80": "Leeuwarden",
    "86": "Maastricht",
}

COUNTRIES = {
    "6030": "the Netherlands",
    "5107": "Suriname",
    "6066": "Turkey",
    "7024": "Morocco",
    "6029": "Germany",
    "5010": "Indonesia",
}

HOUSEHOLD_TYPES = {
    "1": "a single-person",
    "2": "a couple without children",
    "3": "an unmarried couple with children",
    "4": "a single-parent",
    "5": "a multi-person",
}

PERSON_ROLES = {
    "1": "a parent",
    "2": "a partner",
    "3": "a child",
    "4": "a single occupant",
    "5": "a member",
}

EDUCATION_LEVELS = {
    "1": "primary education",
    "2": "secondary education",
    "3": "vocational training",
    "4": "a bachelor degree",
    "5": "a master degree",
}


@dataclass(frozen=True)
class SynthConfig:
    person_count: int = 1000
    start_year: int = 2010
    end_year: int = 2024
    seed: int = 7
    household_moves_per_year: float = 0.22  # per-adult partner/split rate
    address_moves_per_year: float = 0.10  # per-household relocation rate
    job_changes_per_year: float = 0.35
    education_transitions_per_year: float = 0.10
    couple_fraction: float = 0.55
    child_fraction: float = 0.18
    employment_rate: float = 0.55
    salary_jump_prob: float = 0.035  # monthly chance of a raise >= 10%
    vacation_month_prob: float = 0.07
    sick_month_prob: float = 0.035

    def __post_init__(self) -> None:
        if self.person_count < 1:
            raise ValueError("person_count must be >= 1")
        if self.end_year < self.start_year:
            raise ValueError("year range is empty")
        for name in (
            "household_moves_per_year", "address_moves_per_year", "job_changes_per_year",
            "education_transitions_per_year", "salary_jump_prob", "vacation_month_prob",
            "sick_month_prob",
        ):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def standard_schemas() -> dict[str, SourceSchema]:
    """The five source shapes every generated corpus ships with."""
    demographics = SourceSchema(
        name="demographics",
        role=SourceRole.STATIC,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("gbageslacht", FieldKind.INT),
            FieldSpec("gbageboortejaar", FieldKind.INT),
            FieldSpec("birth_date", FieldKind.DATE),
            FieldSpec("birth_country", FieldKind.INT),
            FieldSpec("mother_country", FieldKind.INT),
            FieldSpec("father_country", FieldKind.INT),
        ),
    )
    household = SourceSchema(
        name="household",
        role=SourceRole.SPELLS,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("hh_id", FieldKind.STRING),
            FieldSpec("household_type", FieldKind.INT),
            FieldSpec("person_role", FieldKind.INT),
            FieldSpec("start", FieldKind.DATE),
            FieldSpec("end", FieldKind.DATE),
            FieldSpec("co_members", FieldKind.PERSON_ID_LIST),
        ),
        start_field="start",
        end_field="end",
        link_fields=("co_members",),
    )
    address = SourceSchema(
        name="address",
        role=SourceRole.SPELLS,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("address_id", FieldKind.STRING),
            FieldSpec("municipality", FieldKind.INT),
            FieldSpec("start", FieldKind.DATE),
            FieldSpec("end", FieldKind.DATE),
        ),
        start_field="start",
        end_field="end",
    )
    employment = SourceSchema(
        name="employment",
        role=SourceRole.MONTHLY_EVENTS,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("employer_id", FieldKind.STRING),
            FieldSpec("period", FieldKind.DATE),
            FieldSpec("salary", FieldKind.FLOAT),
            FieldSpec("vacation_days", FieldKind.INT),
            FieldSpec("sick_days", FieldKind.INT),
        ),
        period_field="period",
        group_field="employer_id",
    )
    education = SourceSchema(
        name="education",
        role=SourceRole.YEARLY_ATTRIBUTES,
        focal_key="person_id",
        fields=(
            FieldSpec("person_id", FieldKind.PERSON_ID),
            FieldSpec("year", FieldKind.DATE),
            FieldSpec("education_level", FieldKind.INT),
        ),
        as_of_field="year",
    )
    return {s.name: s for s in (demographics, household, address, employment, education)}


# --- simulation state -------------------------------------------------------

@dataclass
class _Person:
    pid: str
    sex: str
    birth: CivilDate
    countries: tuple[str, str, str]
    household: str | None = None


@dataclass
class _Household:
    hid: str
    members: list[str]
    address: str
    municipality: str


class _Sim:
    """Chronological event loop over shared household state."""

    def __init__(self, config: SynthConfig, rng: random.Random):
        self.config = config
        self.rng = rng
        self.window_start = CivilDate(config.start_year, 1, 1)
        self.window_end = CivilDate(config.end_year, 12, 31)
        self.persons: dict[str, _Person] = {}
        self.households: dict[str, _Household] = {}
        self._hh_counter = 0
        self._addr_counter = 0
        self._event_seq = 0
        self.queue: list = []
        # Per-person household membership spans and per-household address
        # history; both feed the spell files after the loop finishes.
        self.memberships: dict[str, list] = {}  # pid -> [ [hid, from, to|None], ... ]
        self.addresses: dict[str, list] = {}  # hid -> [ [from, addr, muni], ... ]
        self.single_adults: list[str] = []  # adults living alone, partner pool
        self._single_pos: dict[str, int] = {}
        self.adult_pool: list[str] = []  # founding adults, guardians for births

    # -- deterministic helpers ------------------------------------------

    def _random_day(self, year: int) -> CivilDate:
        return CivilDate(year, self.rng.randint(1, 12), self.rng.randint(1, 28))

    def _date_key(self, date: CivilDate) -> tuple[int, int, int]:
        return (date.year, date.month, date.day)

    def push(self, date: CivilDate, kind: str, payload: tuple) -> None:
        if date > self.window_end:
            return
        self._event_seq += 1
        heapq.heappush(self.queue, (self._date_key(date), self._event_seq, kind, date, payload))

    def _next_gap(self, rate_per_year: float) -> int:
        # days until the next event of a memoryless process; 0-rate = never
        if rate_per_year <= 0:
            return 10**9
        return max(1, int(self.rng.expovariate(rate_per_year) * 365.0))

    @staticmethod
    def _add_days(date: CivilDate, days: int) -> CivilDate:
        ordinal = datetime.date(date.year, date.month, date.day).toordinal() + days
        if ordinal > datetime.date(9999, 12, 31).toordinal():
            return CivilDate(9999, 12, 31)
        shifted = datetime.date.fromordinal(ordinal)
        return CivilDate(shifted.year, shifted.month, shifted.day)

    def _new_address(self) -> tuple[str, str]:
        self._addr_counter += 1
        municipality = self.rng.choice(sorted(MUNICIPALITIES))
        return f"A{self._addr_counter:07d}", municipality

    def _new_household(self, members: list[str], date: CivilDate) -> _Household:
        self._hh_counter += 1
        address, municipality = self._new_address()
        household = _Household(f"H{self._hh_counter:07d}", [], address, municipality)
        self.households[household.hid] = household
        self.addresses[household.hid] = [[date, address, municipality]]
        for pid in members:
            self._join(pid, household.hid, date)
        return household

    # -- membership mechanics --------------------------------------------

    def _join(self, pid: str, hid: str, date: CivilDate) -> None:
        person = self.persons[pid]
        if person.household is not None:
            self._leave(pid, date)
        person.household = hid
        self.households[hid].members.append(pid)
        self.memberships.setdefault(pid, []).append([hid, date, None])
        for member in self.households[hid].members:
            self._refresh_single(member, date)

    def _leave(self, pid: str, date: CivilDate) -> None:
        person = self.persons[pid]
        hid = person.household
        if hid is None:
            return
        household = self.households[hid]
        household.members.remove(pid)
        person.household = None
        self.memberships[pid][-1][2] = date  # exclusive upper bound
        self._refresh_single(pid, date)
        for member in household.members:
            self._refresh_single(member, date)
        if not household.members:
            del self.households[hid]

    def _refresh_single(self, pid: str, on: CivilDate) -> None:
        person = self.persons.get(pid)
        is_single = (
            person is not None
            and person.household is not None
            and len(self.households[person.household].members) == 1
            and self._age_years(pid, on) is not None
        )
        in_pool = pid in self._single_pos
        if is_single and not in_pool:
            self._single_pos[pid] = len(self.single_adults)
            self.single_adults.append(pid)
        elif not is_single and in_pool:
            position = self._single_pos.pop(pid)
            last = self.single_adults.pop()
            if last != pid:
                self.single_adults[position] = last
                self._single_pos[last] = position

    def _age_years(self, pid: str, on: CivilDate) -> int | None:
        """Age in whole years, or None when under 18 (not an adult)."""
        birth = self.persons[pid].birth
        age = on.year - birth.year - (1 if (on.month, on.day) < (birth.month, birth.day) else 0)
        return age if age >= 18 else None

    def _take_random_single(self, exclude: str) -> str | None:
        pool = self.single_adults
        if not pool or (len(pool) == 1 and pool[0] == exclude):
            return None
        for _ in range(8):
            pick = pool[self.rng.randrange(len(pool))]
            if pick != exclude:
                return pick
        return None

    # -- event handlers ----------------------------------------------------

    def handle_transition(self, date: CivilDate, pid: str) -> None:
        person = self.persons[pid]
        if person.household is None or self._age_years(pid, date) is None:
            return
        household = self.households[person.household]
        adults = [m for m in household.members if self._age_years(m, date) is not None]
        if len(adults) >= 2:
            # split: leave to a fresh single household, children stay put
            self._leave(pid, date)
            self._new_household([pid], date)
        else:
            partner = self._take_random_single(pid)
            if partner is not None and self.persons[partner].household != person.household:
                self._leave(partner, date)
                self._join(partner, household.hid, date)
        self.push(self._add_days(date, self._next_gap(self.config.household_moves_per_year)),
                  "transition", (pid,))

    def handle_birth(self, date: CivilDate, pid: str) -> None:
        # guardians come from the founding adults, who are always housed
        if self.adult_pool:
            guardian = self.adult_pool[self.rng.randrange(len(self.adult_pool))]
            hid = self.persons[guardian].household
        else:
            hid = self._new_household([], date).hid
        self._join(pid, hid, date)
        leave_age_days = int((18 + self.rng.uniform(0, 8)) * 365.25)
        self.push(self._add_days(date, leave_age_days), "leave_home", (pid,))

    def handle_leave_home(self, date: CivilDate, pid: str) -> None:
        person = self.persons[pid]
        if person.household is None:
            return
        if len(self.households[person.household].members) <= 1:
            return
        self._leave(pid, date)
        self._new_household([pid], date)
        self.push(self._add_days(date, self._next_gap(self.config.household_moves_per_year)),
                  "transition", (pid,))

    def handle_relocation(self, date: CivilDate, hid: str) -> None:
        household = self.households.get(hid)
        if household is None:
            return
        address, municipality = self._new_address()
        household.address = address
        household.municipality = municipality
        self.addresses[hid].append([date, address, municipality])
        self.push(self._add_days(date, self._next_gap(self.config.address_moves_per_year)),
                  "relocation", (hid,))

    def run(self) -> None:
        while self.queue:
            _, _, kind, date, payload = heapq.heappop(self.queue)
            if kind == "transition":
                self.handle_transition(date, *payload)
            elif kind == "birth":
                self.handle_birth(date, *payload)
            elif kind == "leave_home":
                self.handle_leave_home(date, *payload)
            elif kind == "relocation":
                self.handle_relocation(date, *payload)


def _household_type(n_adults: int, n_children: int) -> str:
    if n_adults == 1 and n_children == 0:
        return "1"
    if n_adults == 2 and n_children == 0:
        return "2"
    if n_adults == 2 and n_children >= 1:
        return "3"
    if n_adults == 1 and n_children >= 1:
        return "4"
    return "5"


def _person_role(is_adult: bool, n_adults: int, n_children: int) -> str:
    if not is_adult:
        return "3"
    if n_children >= 1:
        return "1"
    if n_adults == 2:
        return "2"
    if n_adults == 1:
        return "4"
    return "5"


def generate_population(config: SynthConfig, out_dir: str, delimiter: str = ",") -> dict[str, str]:
    """Write the full synthetic corpus into ``out_dir``.

    Emits the five source files plus ``schemas.json``, ``scores.csv`` and
    ``names.csv``; returns source-name -> path. Same config, same bytes.
    """
    rng = random.Random(config.seed)
    os.makedirs(out_dir, exist_ok=True)
    schemas = standard_schemas()

    sim = _Sim(config, rng)
    window_start, window_end = sim.window_start, sim.window_end

    n_children = round(config.person_count * config.child_fraction)
    if config.person_count - n_children < 1:
        n_children = config.person_count - 1
    n_adults = config.person_count - n_children

    country_codes = sorted(COUNTRIES)

    def sample_countries() -> tuple[str, str, str]:
        if rng.random() < 0.75:
            base = "6030"
        else:
            base = country_codes[rng.randrange(len(country_codes))]
        return (
            base,
            country_codes[rng.randrange(len(country_codes))] if rng.random() < 0.3 else base,
            country_codes[rng.randrange(len(country_codes))] if rng.random() < 0.3 else base,
        )

    width = max(6, len(str(config.person_count)))
    for i in range(n_adults):
        pid = f"P{i + 1:0{width}d}"
        birth_year = rng.randint(config.start_year - 58, config.start_year - 20)
        sim.persons[pid] = _Person(pid, str(rng.randint(1, 2)), sim._random_day(birth_year),
                                   sample_countries())
    for i in range(n_children):
        pid = f"P{n_adults + i + 1:0{width}d}"
        birth_year = rng.randint(config.start_year, config.end_year)
        sim.persons[pid] = _Person(pid, str(rng.randint(1, 2)), sim._random_day(birth_year),
                                   sample_countries())

    adult_ids = [p.pid for p in list(sim.persons.values())[:n_adults]]
    child_ids = [p.pid for p in list(sim.persons.values())[n_adults:]]
    sim.adult_pool = adult_ids

    # initial households at the window start
    shuffled = adult_ids[:]
    rng.shuffle(shuffled)
    n_paired = int(len(shuffled) * config.couple_fraction) // 2 * 2
    for i in range(0, n_paired, 2):
        sim._new_household([shuffled[i], shuffled[i + 1]], window_start)
    for pid in shuffled[n_paired:]:
        sim._new_household([pid], window_start)

    for pid in adult_ids:
        sim.push(sim._add_days(window_start, sim._next_gap(config.household_moves_per_year)),
                 "transition", (pid,))
    for hid in sorted(sim.households):
        sim.push(sim._add_days(window_start, sim._next_gap(config.address_moves_per_year)),
                 "relocation", (hid,))
    for pid in child_ids:
        birth = sim.persons[pid].birth
        sim.push(birth if birth >= window_start else window_start, "birth", (pid,))

    sim.run()

    # -- demographics ------------------------------------------------------
    paths: dict[str, str] = {}

    def path_for(name: str) -> str:
        paths[name] = os.path.join(out_dir, schemas[name].file_name)
        return paths[name]

    person_ids = sorted(sim.persons)
    with open(path_for("demographics"), "w", encoding="utf-8", newline="") as out:
        out.write(delimiter.join(schemas["demographics"].field_names) + "\n")
        for pid in person_ids:
            person = sim.persons[pid]
            out.write(delimiter.join((
                pid, person.sex, str(person.birth.year), person.birth.iso(),
                person.countries[0], person.countries[1], person.countries[2],
            )) + "\n")

    # -- household and address spells ---------------------------------------
    spans_by_household: dict[str, list[tuple[CivilDate, CivilDate | None, str]]] = {}
    for pid, entries in sim.memberships.items():
        for hid, span_from, span_to in entries:
            spans_by_household.setdefault(hid, []).append((span_from, span_to, pid))

    def segments(hid: str) -> list[tuple[CivilDate, CivilDate | None, list[str]]]:
        """Constant-composition intervals of one household, from the raw
        membership spans of everyone who ever lived in it."""
        spans = spans_by_household.get(hid, [])
        cuts = sorted({sim._date_key(s[0]) for s in spans}
                      | {sim._date_key(s[1]) for s in spans if s[1] is not None})
        out = []
        for i, cut in enumerate(cuts):
            seg_start = CivilDate(*cut)
            seg_end = CivilDate(*cuts[i + 1]) if i + 1 < len(cuts) else None
            members = sorted(
                pid for (frm, to, pid) in spans
                if frm <= seg_start and (to is None or to > seg_start)
            )
            if members:
                out.append((seg_start, seg_end, members))
        return out

    household_rows: list[tuple] = []  # (pid, start_key, hid, type, role, start, end, co)
    person_addresses: dict[str, list] = {pid: [] for pid in person_ids}

    for hid in sorted(spans_by_household):
        for seg_start, seg_end, members in segments(hid):
            n_adults_seg = sum(1 for m in members if sim._age_years(m, seg_start) is not None)
            n_children_seg = len(members) - n_adults_seg
            hh_type = _household_type(n_adults_seg, n_children_seg)
            end_date = seg_end.prev_day() if seg_end is not None else None
            for pid in members:
                is_adult = sim._age_years(pid, seg_start) is not None
                role = _person_role(is_adult, n_adults_seg, n_children_seg)
                co = ";".join(m for m in members if m != pid)
                household_rows.append(
                    (pid, sim._date_key(seg_start), hid, hh_type, role, seg_start, end_date, co)
                )
            # address intervals for this segment, clipped from the
            # household's address history
            history = sim.addresses[hid]
            for j, (addr_from, address, municipality) in enumerate(history):
                addr_to = history[j + 1][0] if j + 1 < len(history) else None
                lo = max(addr_from, seg_start, key=sim._date_key)
                hi_candidates = [d for d in (addr_to, seg_end) if d is not None]
                hi = min(hi_candidates, key=sim._date_key) if hi_candidates else None
                if hi is not None and hi <= lo:
                    continue
                for pid in members:
                    person_addresses[pid].append([lo, hi, address, municipality])

    household_rows.sort(key=lambda r: (r[0], r[1], r[2]))
    with open(path_for("household"), "w", encoding="utf-8", newline="") as out:
        out.write(delimiter.join(schemas["household"].field_names) + "\n")
        for pid, _, hid, hh_type, role, start, end, co in household_rows:
            out.write(delimiter.join((
                pid, hid, hh_type, role, start.iso(),
                end.iso() if end is not None else "", co,
            )) + "\n")

    with open(path_for("address"), "w", encoding="utf-8", newline="") as out:
        out.write(delimiter.join(schemas["address"].field_names) + "\n")
        for pid in person_ids:
            intervals = sorted(person_addresses[pid], key=lambda iv: sim._date_key(iv[0]))
            merged: list[list] = []
            for lo, hi, address, municipality in intervals:
                if merged and merged[-1][2] == address and (
                    merged[-1][1] is not None and sim._date_key(merged[-1][1]) == sim._date_key(lo)
                ):
                    merged[-1][1] = hi
                else:
                    merged.append([lo, hi, address, municipality])
            for lo, hi, address, municipality in merged:
                end_date = hi.prev_day() if hi is not None else None
                out.write(delimiter.join((
                    pid, address, municipality, lo.iso(),
                    end_date.iso() if end_date is not None else "",
                )) + "\n")

    # -- employment ----------------------------------------------------------
    months: list[CivilDate] = []
    cursor = CivilDate(config.start_year, 1, 1)
    while cursor <= window_end:
        months.append(cursor)
        cursor = cursor.next_month()

    employer_pool = [f"E{i + 1:05d}" for i in range(max(10, config.person_count // 40))]

    with open(path_for("employment"), "w", encoding="utf-8", newline="") as out:
        out.write(delimiter.join(schemas["employment"].field_names) + "\n")
        for pid in person_ids:
            person = sim.persons[pid]
            if rng.random() >= config.employment_rate:
                continue
            work_from_year = max(person.birth.year + 19, config.start_year)
            eligible = [m for m in months if m.year >= work_from_year]
            if not eligible:
                continue
            contract_mean_months = max(6, int(12.0 / max(config.job_changes_per_year, 0.01)))
            t = rng.randrange(0, max(1, len(eligible) // 2)) if len(eligible) > 1 else 0
            while t < len(eligible):
                employer = employer_pool[rng.randrange(len(employer_pool))]
                salary = rng.randrange(1800, 5200, 50)
                length = max(1, int(rng.expovariate(1.0 / contract_mean_months)))
                for k in range(length):
                    if t + k >= len(eligible):
                        break
                    if rng.random() < config.salary_jump_prob:
                        salary = int(salary * (1.10 + rng.random() * 0.25))
                    vacation = rng.randint(5, 20) if rng.random() < config.vacation_month_prob \
                        else rng.randint(0, 2)
                    sick = rng.randint(5, 15) if rng.random() < config.sick_month_prob else 0
                    out.write(delimiter.join((
                        pid, employer, eligible[t + k].iso_month(),
                        str(salary), str(vacation), str(sick),
                    )) + "\n")
                t += length
                if rng.random() < 0.35:  # unemployment gap before the next job
                    t += rng.randint(2, 14)

    # -- education -----------------------------------------------------------
    with open(path_for("education"), "w", encoding="utf-8", newline="") as out:
        out.write(delimiter.join(schemas["education"].field_names) + "\n")
        for pid in person_ids:
            person = sim.persons[pid]
            first_year = max(person.birth.year + 15, config.start_year)
            if first_year > config.end_year:
                continue
            level = min(5, 1 + rng.randrange(3))
            for year in range(first_year, config.end_year + 1):
                age = year - person.birth.year
                if age < 30 and level < 5 and rng.random() < config.education_transitions_per_year:
                    level += 1
                out.write(delimiter.join((pid, str(year), str(level))) + "\n")

    # -- companion tables ------------------------------------------------------
    scores_path = os.path.join(out_dir, "scores.csv")
    with open(scores_path, "w", encoding="utf-8", newline="") as out:
        out.write("person_id,score\n")
        for pid in person_ids:
            out.write(f"{pid},{rng.random():.4f}\n")
    paths["scores"] = scores_path

    names_path = os.path.join(out_dir, "names.csv")
    with open(names_path, "w", encoding="utf-8", newline="") as out:
        out.write("person_id,name\n")
        for i, pid in enumerate(person_ids):
            given = GIVEN_NAMES[i % len(GIVEN_NAMES)]
            out.write(f"{pid},{given}{i // len(GIVEN_NAMES) + 1}\n")
    paths["names"] = names_path

    write_schema_registry(schemas, os.path.join(out_dir, "schemas.json"))
    paths["schemas"] = os.path.join(out_dir, "schemas.json")
    return paths
