"""Microdata model: person records, parent-child pairs, windowed incomes.

Input is a flat CSV with one row per person. Income is held year by year;
pair construction averages it over configurable age windows, with the
child window anchored to the child's own age and the parent window
anchored to the child's age (default: child ages 17-19). Averages include
zeros for years in which a person is resident but has no recorded income.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

OCC_MISSING = 10  # occupation codes run 0..10, 10 = missing/none


class MicrodataError(ValueError):
    """Malformed input file: message names the offending row and column."""


@dataclass(frozen=True)
class PersonRecord:
    """One person: identifier, demographics, and year-indexed incomes.

    ``incomes`` holds only years with a recorded (possibly zero) amount;
    a year absent from the map is an unrecorded year. ``residency`` is
    the inclusive year span in which the person counts as resident; by
    default the loader sets it to the file's full income-year span, so an
    unrecorded year inside the span contributes a zero to averages.
    """

    person_id: str
    birth_year: int
    sex: str  # "M" or "F"
    incomes: dict[int, float] = field(default_factory=dict)
    education_years: float | None = None
    occupation_group: int = OCC_MISSING
    residency: tuple[int, int] | None = None

    def __post_init__(self):
        if self.sex not in ("M", "F"):
            raise MicrodataError(f"person {self.person_id}: sex must be M or F")
        for year, amount in self.incomes.items():
            if not np.isfinite(amount) or amount < 0:
                raise MicrodataError(
                    f"person {self.person_id}: income for {year} must be finite and >= 0"
                )
        if not 0 <= self.occupation_group <= OCC_MISSING:
            raise MicrodataError(
                f"person {self.person_id}: occupation_group outside 0..{OCC_MISSING}"
            )

    def resident_in(self, year: int) -> bool:
        if self.residency is None:
            return True
        return self.residency[0] <= year <= self.residency[1]


@dataclass(frozen=True)
class IncomeWindow:
    """Symmetric age window ``center_age - half_width .. center_age + half_width``.

    ``anchor`` decides whose age the window refers to: ``"own_age"`` for
    the measured person (children) or ``"child_age"`` for parents, whose
    income years are placed around a given age of their child.
    """

    anchor: str = "own_age"
    center_age: int = 36
    half_width: int = 1

    def __post_init__(self):
        if self.anchor not in ("own_age", "child_age"):
            raise ValueError("anchor must be 'own_age' or 'child_age'")
        if self.half_width < 0:
            raise ValueError("half_width must be >= 0")
        if self.center_age <= 0:
            raise ValueError("center_age must be positive")

    def years(self, birth_year: int) -> range:
        """Calendar years of the window for a person/anchor born in ``birth_year``."""
        lo = birth_year + self.center_age - self.half_width
        return range(lo, lo + 2 * self.half_width + 1)


CHILD_WINDOW = IncomeWindow(anchor="own_age", center_age=36, half_width=1)
PARENT_WINDOW = IncomeWindow(anchor="child_age", center_age=18, half_width=1)


@dataclass
class PersonTable:
    """Loaded microdata: records keyed by id plus declared parent links."""

    records: dict[str, PersonRecord]
    links: dict[str, tuple[str | None, str | None]]
    income_years: list[int]
    n_rows: int

    def __len__(self) -> int:
        return self.n_rows


@dataclass(frozen=True)
class ColumnSchema:
    """Column names of the microdata CSV."""

    person_id: str = "person_id"
    birth_year: str = "birth_year"
    sex: str = "sex"
    income_prefix: str = "inc_"
    education: str = "edu_years"
    occupation: str = "occ_group"
    father_id: str = "father_id"
    mother_id: str = "mother_id"


def _parse_cell(raw: str, row: int, col: str, kind: str):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        if kind == "int":
            return int(raw)
        value = float(raw)
    except ValueError:
        raise MicrodataError(f"row {row}, column {col}: cannot parse {raw!r}") from None
    if not np.isfinite(value):
        raise MicrodataError(f"row {row}, column {col}: non-finite value")
    return value


def load_microdata(path, schema: ColumnSchema = ColumnSchema()) -> PersonTable:
    """Load a person-per-row CSV into a :class:`PersonTable`.

    Required columns: person_id, birth_year, sex (M/F) and at least one
    income column named ``inc_<year>``. Optional: edu_years, occ_group,
    father_id, mother_id. Empty income cells are unrecorded years; any
    negative or unparsable cell aborts with the row and column named.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in (schema.person_id, schema.birth_year, schema.sex):
            if col not in header:
                raise MicrodataError(f"missing required column {col!r}")
        income_cols = []
        for col in header:
            if col.startswith(schema.income_prefix):
                try:
                    year = int(col[len(schema.income_prefix):])
                except ValueError:
                    raise MicrodataError(f"income column {col!r} has no parseable year")
                income_cols.append((col, year))
        if not income_cols:
            raise MicrodataError(f"no income columns with prefix {schema.income_prefix!r}")
        years = sorted(year for _, year in income_cols)
        span = (years[0], years[-1])

        records: dict[str, PersonRecord] = {}
        links: dict[str, tuple[str | None, str | None]] = {}
        for i, row in enumerate(reader, start=1):
            pid = (row.get(schema.person_id) or "").strip()
            if not pid:
                raise MicrodataError(f"row {i}, column {schema.person_id}: empty id")
            if pid in records:
                raise MicrodataError(f"row {i}: duplicate person_id {pid!r}")
            birth = _parse_cell(row[schema.birth_year], i, schema.birth_year, "int")
            if birth is None:
                raise MicrodataError(f"row {i}, column {schema.birth_year}: empty")
            sex = (row.get(schema.sex) or "").strip().upper()
            if sex not in ("M", "F"):
                raise MicrodataError(f"row {i}, column {schema.sex}: expected M or F")

            incomes: dict[int, float] = {}
            for col, year in income_cols:
                amount = _parse_cell(row.get(col, ""), i, col, "float")
                if amount is None:
                    continue
                if amount < 0:
                    raise MicrodataError(f"row {i}, column {col}: negative income {amount}")
                incomes[year] = amount

            edu = None
            if schema.education in row:
                edu = _parse_cell(row.get(schema.education, ""), i, schema.education, "float")
                if edu is not None and edu < 0:
                    raise MicrodataError(f"row {i}, column {schema.education}: negative")
            occ = OCC_MISSING
            if schema.occupation in row:
                parsed = _parse_cell(row.get(schema.occupation, ""), i, schema.occupation, "int")
                if parsed is not None:
                    if not 0 <= parsed <= OCC_MISSING:
                        raise MicrodataError(
                            f"row {i}, column {schema.occupation}: code {parsed} outside 0..10"
                        )
                    occ = parsed

            records[pid] = PersonRecord(
                person_id=pid,
                birth_year=int(birth),
                sex=sex,
                incomes=incomes,
                education_years=edu,
                occupation_group=occ,
                residency=span,
            )
            father = (row.get(schema.father_id) or "").strip() or None
            mother = (row.get(schema.mother_id) or "").strip() or None
            links[pid] = (father, mother)

    return PersonTable(records=records, links=links, income_years=years, n_rows=len(records))


def average_income(person: PersonRecord, window_years) -> float | None:
    """Mean income over ``window_years``, zeros included for resident years.

    Years in which the person is resident but has no recorded income
    contribute 0. Non-resident years drop out of the denominator, so a
    person resident for only part of the window is averaged over the
    resident years alone. Returns ``None`` when the person is resident in
    none of the window years.
    """
    window_years = list(window_years)
    if not window_years:
        raise ValueError("empty income window")
    # summed in year order so the result is invariant to input ordering
    resident = sorted(y for y in set(window_years) if person.resident_in(y))
    if not resident:
        return None
    total = sum(person.incomes.get(y, 0.0) for y in resident)
    return total / len(resident)


def build_pairs(
    persons: PersonTable,
    links: dict[str, tuple[str | None, str | None]] | None = None,
    child_window: IncomeWindow = CHILD_WINDOW,
    parent_window: IncomeWindow = PARENT_WINDOW,
    cohorts=None,
) -> tuple[pd.DataFrame, dict[str, int]]:
    """Resolve parent links into a pair table with averaged incomes.

    One output row per child with at least one identifiable parent.
    Parent incomes are averaged over years anchored to the child's age
    (default ages 17-19); joint parental income is the mean of the two
    parents' averages, or the single parent's average when only one is
    present. ``cohorts`` restricts which birth years count as children.

    Returns the pair table and an exclusion report whose counts satisfy
    ``children == pairs + sum(excluded_*)``.
    """
    if links is None:
        links = persons.links
    report = {
        "children": 0,
        "pairs": 0,
        "excluded_no_parent": 0,
        "excluded_child_income_missing": 0,
        "excluded_parent_income_missing": 0,
    }
    cohort_set = set(cohorts) if cohorts is not None else None
    rows = []
    for child_id, (father_id, mother_id) in links.items():
        child = persons.records.get(child_id)
        if child is None:
            continue
        if cohort_set is not None and child.birth_year not in cohort_set:
            continue
        report["children"] += 1
        father = persons.records.get(father_id) if father_id else None
        mother = persons.records.get(mother_id) if mother_id else None
        if father is None and mother is None:
            report["excluded_no_parent"] += 1
            continue

        child_years = list(child_window.years(child.birth_year))
        parent_years = list(parent_window.years(child.birth_year))
        child_income = average_income(child, child_years)
        if child_income is None:
            report["excluded_child_income_missing"] += 1
            continue

        parent_avgs = []
        row = {
            "child_id": child_id,
            "cohort": child.birth_year,
            "child_sex": child.sex,
            "child_income": child_income,
            "child_window_years": sum(child.resident_in(y) for y in child_years),
            "child_edu": child.education_years,
            "child_occ": child.occupation_group,
        }
        for role, parent in (("father", father), ("mother", mother)):
            if parent is None:
                row[f"{role}_id"] = None
                row[f"{role}_income"] = np.nan
                row[f"{role}_window_years"] = 0
                row[f"{role}_edu"] = None
                row[f"{role}_occ"] = OCC_MISSING
                continue
            avg = average_income(parent, parent_years)
            row[f"{role}_id"] = parent.person_id
            row[f"{role}_income"] = np.nan if avg is None else avg
            row[f"{role}_window_years"] = sum(parent.resident_in(y) for y in parent_years)
            row[f"{role}_edu"] = parent.education_years
            row[f"{role}_occ"] = parent.occupation_group
            if avg is not None:
                parent_avgs.append(avg)
        if not parent_avgs:
            report["excluded_parent_income_missing"] += 1
            continue
        row["parent_income"] = float(np.mean(parent_avgs))
        rows.append(row)
        report["pairs"] += 1

    columns = [
        "child_id", "cohort", "child_sex", "child_income", "child_window_years",
        "child_edu", "child_occ",
        "father_id", "father_income", "father_window_years", "father_edu", "father_occ",
        "mother_id", "mother_income", "mother_window_years", "mother_edu", "mother_occ",
        "parent_income",
    ]
    table = pd.DataFrame(rows, columns=columns)
    return table, report
