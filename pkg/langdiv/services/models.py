from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from typing import Dict, Mapping, Sequence, Tuple

from langdiv.services.errors import ArgumentError

OUTSIDE = "OUTSIDE"
UNDETERMINED = "und"

Month = Tuple[int, int]


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise ArgumentError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ArgumentError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True, slots=True)
class TextRecord:
    """One geotagged message. Coordinates may be absent when a geohash is given."""

    id: str
    text: str
    timestamp: dt.datetime
    lat: float | None = None
    lon: float | None = None
    geohash: str | None = None

    @property
    def has_coordinates(self) -> bool:
        return self.lat is not None and self.lon is not None


@dataclass(frozen=True, slots=True)
class CollectionPoint:
    name: str
    region: str
    island: str
    urban_rural: str
    lat: float
    lon: float


@dataclass(frozen=True, slots=True)
class LanguagePrediction:
    record_id: str
    language: str
    confidence: float


@dataclass(frozen=True)
class AgreementReport:
    total: int
    mismatches: int
    mismatch_rate: float
    reclassification_pairs: Tuple[Tuple[Tuple[str, str], int], ...]


@dataclass(frozen=True)
class LanguageScores:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvaluationReport:
    per_language: Dict[str, LanguageScores]
    macro_precision: float
    macro_recall: float
    macro_f1: float


@dataclass(frozen=True, slots=True)
class Assignment:
    record_id: str
    point_name: str
    region: str
    distance_km: float

    @property
    def is_outside(self) -> bool:
        return self.point_name == OUTSIDE


@dataclass(frozen=True)
class CoverageReport:
    total: int
    assigned: int
    outside: int
    region_counts: Dict[str, int]
    region_shares: Dict[str, float]


@dataclass(frozen=True)
class Rollup:
    level: str
    groups: Dict[str, Tuple[str, ...]]
    outside: Tuple[str, ...]


@dataclass(frozen=True)
class LanguageHistogram:
    """Language counts for one (place, period) cell.

    ``dropped`` tallies codes removed by exclusions (``und`` included) so the
    cell's raw volume stays visible even though it never enters ``counts``.
    """

    place: str
    period: str
    counts: Mapping[str, int]
    dropped: Mapping[str, int] = field(default_factory=dict)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    @property
    def cell(self) -> Tuple[str, str]:
        return (self.place, self.period)

    def merge(self, other: "LanguageHistogram") -> "LanguageHistogram":
        if self.cell != other.cell:
            raise ArgumentError(f"cannot merge histograms for cells {self.cell} and {other.cell}")
        return LanguageHistogram(
            place=self.place,
            period=self.period,
            counts=_sum_counts(self.counts, other.counts),
            dropped=_sum_counts(self.dropped, other.dropped),
        )


def _sum_counts(left: Mapping[str, int], right: Mapping[str, int]) -> Dict[str, int]:
    combined: Dict[str, int] = dict(left)
    for code, count in right.items():
        combined[code] = combined.get(code, 0) + count
    return dict(sorted(combined.items()))


@dataclass(frozen=True)
class CRResult:
    n: int
    value: float
    band: str
    languages_used: Tuple[str, ...]


@dataclass(frozen=True, slots=True)
class RankedLanguage:
    language: str
    count: int
    share: float


@dataclass(frozen=True)
class TermFilterResult:
    kept: Tuple[TextRecord, ...]
    removed: int


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    n_pairs: int
    p_value: float
    stars: int


@dataclass(frozen=True)
class PairCorrelation:
    pair_name: str
    result: CorrelationResult
    method: str = "spearman"


@dataclass(frozen=True)
class ReferenceCheck:
    pair_name: str
    observed: float
    expected: float
    tolerance: float

    @property
    def deviation(self) -> float:
        return abs(self.observed - self.expected)

    @property
    def within_tolerance(self) -> bool:
        return self.deviation <= self.tolerance


@dataclass(frozen=True, slots=True)
class CensusRow:
    geography: str
    language_label: str
    language_code: str
    count: int
    census_year: int


@dataclass(frozen=True)
class CensusTable:
    rows: Tuple[CensusRow, ...]
    warnings: Tuple[str, ...] = ()

    @property
    def total(self) -> int:
        return sum(row.count for row in self.rows)


@dataclass(frozen=True)
class ExclusionPolicy:
    drop_signed: bool = True
    drop_other_nfd: bool = True
    drop_none_too_young: bool = True
    custom_labels: frozenset[str] = frozenset()


@dataclass(frozen=True)
class ExclusionResult:
    table: CensusTable
    manifest: Dict[str, Tuple[CensusRow, ...]]

    @property
    def dropped_total(self) -> int:
        return sum(row.count for rows in self.manifest.values() for row in rows)


@dataclass(frozen=True)
class RegionProfile:
    region: str
    pop_density: float
    median_age: float
    corpus_share: float


@dataclass(frozen=True)
class MonthlyBucket:
    place: str
    year: int
    month: int
    record_ids: frozenset[str]

    @property
    def key(self) -> Tuple[str, int, int]:
        return (self.place, self.year, self.month)

    @property
    def count(self) -> int:
        return len(self.record_ids)


@dataclass(frozen=True)
class MonthlyCRSeries:
    place: str
    mode: str
    n: int
    cr: Dict[Month, CRResult]
    counts: Dict[Month, int]
    skipped: Tuple[Month, ...]


@dataclass(frozen=True)
class SeriesDiagnostics:
    outlier_months: Tuple[Month, ...]
    gap_months: Tuple[Month, ...]
    window_means: Tuple[float, ...]
    max_mean_drift: float
    stationary_flag: bool


@dataclass(frozen=True)
class RegionMixProfile:
    region: str
    anchor: GeoPoint
    monthly_volume: int
    mixture: Mapping[str, float]
    seasonal_overrides: Mapping[int, Mapping[str, float]] = field(default_factory=dict)

    def mixture_for(self, month: int) -> Mapping[str, float]:
        return self.seasonal_overrides.get(month, self.mixture)


@dataclass(frozen=True)
class SyntheticCorpus:
    records: Tuple[TextRecord, ...]
    labels: Dict[str, str]


LabeledText = Tuple[str, str]
PredictionSet = Sequence[LanguagePrediction]
