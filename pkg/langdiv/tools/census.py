from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple

from langdiv.services.errors import (
    ArgumentError,
    CensusLoadError,
    EmptyCellError,
    RecordParseError,
    RecordValidationError,
)
from langdiv.services.models import (
    CensusRow,
    CensusTable,
    ExclusionPolicy,
    ExclusionResult,
    LanguageHistogram,
    PairCorrelation,
    ReferenceCheck,
    RegionProfile,
)
from langdiv.services.preprocess import iter_csv_rows, require_columns
from langdiv.tools.diversity import CORRELATION_METHODS

LOGGER = logging.getLogger(__name__)

UNMAPPED_PREFIX = "mis:"

BATTERY_PAIRS = (
    "census_x_model_a",
    "census_x_model_b",
    "model_a_x_model_b",
    "census_x_pop_density",
    "census_x_median_age",
    "census_x_corpus_share",
)

_SIGNED_RE = re.compile(r"\bsign(ed)? language", re.IGNORECASE)
_OTHER_NFD_RE = re.compile(r"^other\b.*not further defined", re.IGNORECASE)
_NONE_RE = re.compile(r"^none\b", re.IGNORECASE)


def load_crosswalk(path: Path) -> Dict[str, str]:
    crosswalk: Dict[str, str] = {}
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("language_label", "iso639_3"), line)
        label = row["language_label"]
        if label in crosswalk:
            raise CensusLoadError(f"crosswalk line {line}: duplicate label {label!r}")
        crosswalk[label] = row["iso639_3"]
    return crosswalk


def _parse_int(value: str, line: int, field: str) -> int:
    try:
        return int(value.replace(",", ""))
    except ValueError as exc:
        raise RecordParseError(f"not an integer: {value!r}", line, field) from exc


def load_census(path: Path, crosswalk: Mapping[str, str] | None = None) -> CensusTable:
    """Read ``geography,language_label,count,year`` rows.

    Labels missing from the crosswalk keep the sentinel code ``mis:<label>``
    and are listed in the table's warnings.
    """
    mapping = crosswalk or {}
    rows: List[CensusRow] = []
    seen: Dict[Tuple[str, str, int], int] = {}
    unmapped: set[str] = set()
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("geography", "language_label", "count", "year"), line)
        count = _parse_int(row["count"], line, "count")
        year = _parse_int(row["year"], line, "year")
        if count < 0:
            raise RecordValidationError(f"negative count {count}", line, "count")
        key = (row["geography"], row["language_label"], year)
        if key in seen:
            raise CensusLoadError(
                f"line {line}: duplicate row {key[0]}/{key[1]}/{year} (first seen on line {seen[key]})"
            )
        seen[key] = line
        code = mapping.get(row["language_label"])
        if not code:
            code = f"{UNMAPPED_PREFIX}{row['language_label']}"
            unmapped.add(row["language_label"])
        rows.append(CensusRow(row["geography"], row["language_label"], code, count, year))
    warnings = tuple(f"unmapped census label {label!r}" for label in sorted(unmapped))
    for warning in warnings:
        LOGGER.warning(warning)
    return CensusTable(rows=tuple(rows), warnings=warnings)


def is_excluded(label: str, policy: ExclusionPolicy) -> bool:
    if label in policy.custom_labels:
        return True
    if policy.drop_signed and _SIGNED_RE.search(label):
        return True
    if policy.drop_other_nfd and _OTHER_NFD_RE.search(label):
        return True
    return bool(policy.drop_none_too_young and _NONE_RE.search(label))


def apply_exclusions(table: CensusTable, policy: ExclusionPolicy) -> ExclusionResult:
    kept: List[CensusRow] = []
    dropped: Dict[str, List[CensusRow]] = defaultdict(list)
    for row in table.rows:
        if is_excluded(row.language_label, policy):
            dropped[row.language_label].append(row)
        else:
            kept.append(row)
    manifest = {label: tuple(rows) for label, rows in sorted(dropped.items())}
    for label, rows in manifest.items():
        LOGGER.info("excluded census label %r (%d rows, %d responses)", label, len(rows), sum(r.count for r in rows))
    return ExclusionResult(table=CensusTable(rows=tuple(kept), warnings=table.warnings), manifest=manifest)


def census_histogram(table: CensusTable, geography: str, year: int) -> LanguageHistogram:
    counts: Counter[str] = Counter()
    matched = False
    for row in table.rows:
        if row.geography == geography and row.census_year == year:
            matched = True
            counts[row.language_code] += row.count
    if not matched or sum(counts.values()) == 0:
        raise EmptyCellError(f"no census counts for {geography} in {year}")
    return LanguageHistogram(place=geography, period=str(year), counts=dict(sorted(counts.items())))


def census_geographies(table: CensusTable, year: int) -> List[str]:
    return sorted({row.geography for row in table.rows if row.census_year == year})


def census_years(table: CensusTable) -> List[int]:
    return sorted({row.census_year for row in table.rows})


def select_years(table: CensusTable, years: Sequence[int]) -> CensusTable:
    """Keep only rows from ``years``; every requested year must be present."""
    available = census_years(table)
    wanted = set(years)
    missing = sorted(wanted - set(available))
    if missing:
        listed = ", ".join(map(str, available))
        raise EmptyCellError(f"census has no rows for {', '.join(map(str, missing))} (available: {listed})")
    return CensusTable(rows=tuple(row for row in table.rows if row.census_year in wanted), warnings=table.warnings)


# ----------------------------------------------------------------------
# Regional tables
# ----------------------------------------------------------------------
def load_region_table(path: Path, columns: Sequence[str]) -> Dict[str, Dict[str, float]]:
    """Read a ``region,<columns...>`` fixture into region -> column -> value."""
    table: Dict[str, Dict[str, float]] = {}
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("region", *columns), line)
        region = row["region"]
        if region in table:
            raise CensusLoadError(f"{Path(path).name} line {line}: duplicate region {region!r}")
        values: Dict[str, float] = {}
        for column in columns:
            try:
                values[column] = float(row[column].replace(",", "").rstrip("%"))
            except ValueError as exc:
                raise RecordParseError(f"not a number: {row[column]!r}", line, column) from exc
        table[region] = values
    return table


def load_region_profiles(table5: Path, table6: Path) -> List[RegionProfile]:
    shares = load_region_table(table5, ("tweets", "corpus_share"))
    demographics = load_region_table(table6, ("pop_density", "median_age"))
    _require_same_regions({"corpus": shares, "demographics": demographics})
    profiles: List[RegionProfile] = []
    for region in sorted(demographics):
        profile = RegionProfile(
            region=region,
            pop_density=demographics[region]["pop_density"],
            median_age=demographics[region]["median_age"],
            corpus_share=shares[region]["corpus_share"],
        )
        if profile.pop_density <= 0:
            raise RecordValidationError(f"population density for {region} must be > 0", None, "pop_density")
        if not 0.0 <= profile.corpus_share <= 1.0:
            raise RecordValidationError(f"corpus share for {region} must be in [0, 1]", None, "corpus_share")
        profiles.append(profile)
    return profiles


def _require_same_regions(series: Mapping[str, Mapping[str, object]]) -> List[str]:
    names = list(series)
    union = set().union(*(set(values) for values in series.values()))
    problems = []
    for name in names:
        missing = sorted(union - set(series[name]))
        if missing:
            problems.append(f"{name} missing {', '.join(missing)}")
    if problems:
        raise ArgumentError("region keys differ: " + "; ".join(problems))
    return sorted(union)


def comparison_battery(
    census_cr: Mapping[str, float],
    model_cr_a: Mapping[str, float],
    model_cr_b: Mapping[str, float],
    profiles: Sequence[RegionProfile],
    method: str = "spearman",
) -> List[PairCorrelation]:
    """Six correlations between census CR, both model CRs and region profiles.

    ``method`` is ``spearman`` (rank) or ``pearson`` (raw values).
    """
    if method not in CORRELATION_METHODS:
        raise ArgumentError(f"unknown correlation method {method!r}")
    correlate = CORRELATION_METHODS[method]
    by_region = {profile.region: profile for profile in profiles}
    if len(by_region) != len(profiles):
        raise ArgumentError("region profiles repeat a region")
    regions = _require_same_regions(
        {"census": census_cr, "model_a": model_cr_a, "model_b": model_cr_b, "profiles": by_region}
    )
    census = [census_cr[region] for region in regions]
    model_a = [model_cr_a[region] for region in regions]
    model_b = [model_cr_b[region] for region in regions]
    series = {
        "census_x_model_a": (census, model_a),
        "census_x_model_b": (census, model_b),
        "model_a_x_model_b": (model_a, model_b),
        "census_x_pop_density": (census, [by_region[r].pop_density for r in regions]),
        "census_x_median_age": (census, [by_region[r].median_age for r in regions]),
        "census_x_corpus_share": (census, [by_region[r].corpus_share for r in regions]),
    }
    return [PairCorrelation(name, correlate(*series[name]), method) for name in BATTERY_PAIRS]


def load_reference_correlations(path: Path) -> Dict[str, Tuple[float, float]]:
    references: Dict[str, Tuple[float, float]] = {}
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("pair_name", "expected_rho", "tolerance"), line)
        try:
            references[row["pair_name"]] = (float(row["expected_rho"]), float(row["tolerance"]))
        except ValueError as exc:
            raise RecordParseError(f"invalid reference value: {exc}", line, "expected_rho") from exc
    return references


def check_against_reference(
    battery: Sequence[PairCorrelation], references: Mapping[str, Tuple[float, float]]
) -> List[ReferenceCheck]:
    checks: List[ReferenceCheck] = []
    for pair in battery:
        if pair.pair_name not in references:
            continue
        expected, tolerance = references[pair.pair_name]
        check = ReferenceCheck(pair.pair_name, pair.result.rho, expected, tolerance)
        if not check.within_tolerance:
            LOGGER.warning(
                "%s: %s %.4f deviates from reference %.2f by %.4f (tolerance %.2f)",
                check.pair_name,
                pair.method,
                check.observed,
                check.expected,
                check.deviation,
                check.tolerance,
            )
        checks.append(check)
    return checks
