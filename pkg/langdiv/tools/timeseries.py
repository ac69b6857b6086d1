from __future__ import annotations

import datetime as dt
import logging
from collections import defaultdict
from typing import AbstractSet, Dict, Iterable, List, Mapping, Sequence

import numpy as np
from scipy.stats import median_abs_deviation

from langdiv.services.errors import ArgumentError, DiagnosticError, EmptyCellError
from langdiv.services.models import (
    CRResult,
    LanguagePrediction,
    Month,
    MonthlyBucket,
    MonthlyCRSeries,
    SeriesDiagnostics,
    TextRecord,
)
from langdiv.tools.diversity import concentration_ratio, histogram
from langdiv.tools.langid import agreed_record_ids

LOGGER = logging.getLogger(__name__)

MODES = ("model_a", "model_b", "agreement")


def month_of(timestamp: dt.datetime, tz_offset: int = 0) -> Month:
    shifted = timestamp.astimezone(dt.timezone.utc) + dt.timedelta(minutes=tz_offset)
    return (shifted.year, shifted.month)


def next_month(month: Month) -> Month:
    year, number = month
    return (year + 1, 1) if number == 12 else (year, number + 1)


def month_span(first: Month, last: Month) -> List[Month]:
    months: List[Month] = []
    current = first
    while current <= last:
        months.append(current)
        current = next_month(current)
    return months


def bucket_monthly(records: Iterable[TextRecord], place: str, tz_offset: int = 0) -> List[MonthlyBucket]:
    """Group records into calendar months after shifting by ``tz_offset`` minutes."""
    grouped: Dict[Month, set[str]] = defaultdict(set)
    for record in records:
        grouped[month_of(record.timestamp, tz_offset)].add(record.id)
    return [
        MonthlyBucket(place=place, year=year, month=month, record_ids=frozenset(ids))
        for (year, month), ids in sorted(grouped.items())
    ]


def _bucket_span(buckets: Sequence[MonthlyBucket]) -> List[Month]:
    if not buckets:
        return []
    months = sorted((bucket.year, bucket.month) for bucket in buckets)
    return month_span(months[0], months[-1])


def _by_id(predictions: Iterable[LanguagePrediction]) -> Dict[str, LanguagePrediction]:
    return {prediction.record_id: prediction for prediction in predictions}


def language_frequency_series(
    buckets: Sequence[MonthlyBucket],
    predictions: Iterable[LanguagePrediction],
    language: str,
    known_languages: AbstractSet[str],
) -> Dict[Month, int]:
    """Monthly count of records predicted as ``language``, zero-filled across the span."""
    if language not in known_languages:
        raise ArgumentError(f"unknown language code {language!r}")
    indexed = _by_id(predictions)
    by_month = {(bucket.year, bucket.month): bucket for bucket in buckets}
    series: Dict[Month, int] = {}
    for month in _bucket_span(buckets):
        bucket = by_month.get(month)
        series[month] = 0 if bucket is None else sum(
            1
            for record_id in bucket.record_ids
            if record_id in indexed and indexed[record_id].language == language
        )
    return series


def monthly_cr_series(
    buckets: Sequence[MonthlyBucket],
    predictions_a: Sequence[LanguagePrediction],
    predictions_b: Sequence[LanguagePrediction] | None,
    n: int = 10,
    mode: str = "model_a",
    exclusions: AbstractSet[str] = frozenset(),
) -> MonthlyCRSeries:
    if mode not in MODES:
        raise ArgumentError(f"unknown mode {mode!r}; expected one of {', '.join(MODES)}")
    if mode != "model_a" and predictions_b is None:
        raise ArgumentError(f"mode {mode} needs a second prediction set")

    if mode == "model_b":
        source = _by_id(predictions_b or ())
        eligible: AbstractSet[str] | None = None
    else:
        source = _by_id(predictions_a)
        eligible = agreed_record_ids(predictions_a, predictions_b or ()) if mode == "agreement" else None

    place = buckets[0].place if buckets else ""
    by_month = {(bucket.year, bucket.month): bucket for bucket in buckets}
    cr: Dict[Month, CRResult] = {}
    counts: Dict[Month, int] = {}
    skipped: List[Month] = []
    for month in _bucket_span(buckets):
        bucket = by_month.get(month)
        ids = sorted(bucket.record_ids) if bucket is not None else []
        if eligible is not None:
            ids = [record_id for record_id in ids if record_id in eligible]
        selected = [source[record_id] for record_id in ids if record_id in source]
        counts[month] = len(selected)
        try:
            cr[month] = concentration_ratio(
                histogram(selected, place, f"{month[0]:04d}-{month[1]:02d}", exclusions), n
            )
        except EmptyCellError:
            skipped.append(month)
    if skipped:
        LOGGER.info("%s: skipped %d empty months", place or "series", len(skipped))
    return MonthlyCRSeries(place=place, mode=mode, n=n, cr=cr, counts=counts, skipped=tuple(skipped))


def diagnostics(
    counts: Mapping[Month, int],
    cr_values: Mapping[Month, float],
    k_mad: float = 5.0,
    windows: int = 4,
    drift_threshold: float = 0.10,
) -> SeriesDiagnostics:
    """MAD outliers, interior gaps and a windowed-mean drift proxy for stationarity."""
    if k_mad <= 0 or windows < 1 or drift_threshold <= 0:
        raise ArgumentError("k_mad and drift_threshold must be > 0 and windows >= 1")
    observed = sorted(month for month, count in counts.items() if count > 0)
    if len(observed) < windows:
        raise DiagnosticError(f"need at least {windows} non-empty months, got {len(observed)}")

    gaps = tuple(month for month in month_span(observed[0], observed[-1]) if counts.get(month, 0) == 0)

    values = np.asarray([counts[month] for month in observed], dtype=float)
    centre = float(np.median(values))
    spread = float(median_abs_deviation(values, scale=1.0))
    outliers = tuple(
        month for month, value in zip(observed, values) if abs(value - centre) > k_mad * spread
    )

    excluded = set(outliers) | set(gaps)
    kept = [float(cr_values[month]) for month in sorted(cr_values) if month not in excluded]
    if len(kept) < windows:
        raise DiagnosticError(f"need at least {windows} CR values after removing outliers, got {len(kept)}")
    series = np.asarray(kept, dtype=float)
    global_mean = float(series.mean())
    window_means = tuple(float(chunk.mean()) for chunk in np.array_split(series, windows))
    if global_mean == 0.0:
        raise DiagnosticError("CR series has zero mean")
    drift = max(abs(mean - global_mean) for mean in window_means) / global_mean
    return SeriesDiagnostics(
        outlier_months=outliers,
        gap_months=gaps,
        window_means=window_means,
        max_mean_drift=float(drift),
        stationary_flag=bool(drift < drift_threshold),
    )
