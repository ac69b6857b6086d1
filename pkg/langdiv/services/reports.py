"""Deterministic writers for every stage output.

CSV files are UTF-8 with LF line endings and a header row. Statistics are
formatted with six decimals and distances with four, so repeated runs over the
same inputs produce identical bytes.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Sequence

from langdiv.services.errors import MissingStageError
from langdiv.services.models import (
    AgreementReport,
    Assignment,
    CoverageReport,
    CRResult,
    EvaluationReport,
    ExclusionResult,
    LanguagePrediction,
    Month,
    MonthlyCRSeries,
    PairCorrelation,
    RankedLanguage,
    ReferenceCheck,
    SeriesDiagnostics,
    TextRecord,
)


def fmt_stat(value: float) -> str:
    return f"{value:.6f}"


def fmt_distance(value: float) -> str:
    return f"{value:.4f}"


def fmt_timestamp(value: dt.datetime) -> str:
    return value.astimezone(dt.timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence[object]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow(row)
    return target


def write_jsonl(path: Path, items: Iterable[Mapping[str, object]]) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with target.open("w", encoding="utf-8", newline="\n") as handle:
        for item in items:
            handle.write(json.dumps(item, ensure_ascii=False))
            handle.write("\n")
    return target


def write_text(path: Path, text: str) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(text if text.endswith("\n") else text + "\n", encoding="utf-8", newline="\n")
    return target


def read_csv(path: Path, stage: str) -> List[Dict[str, str]]:
    target = Path(path)
    if not target.is_file():
        raise MissingStageError(stage, target)
    with target.open("r", encoding="utf-8", newline="") as handle:
        return list(csv.DictReader(handle))


# ----------------------------------------------------------------------
# Records and language identification
# ----------------------------------------------------------------------
def record_payload(record: TextRecord) -> Dict[str, object]:
    payload: Dict[str, object] = {"id": record.id, "text": record.text, "timestamp": fmt_timestamp(record.timestamp)}
    if record.has_coordinates:
        payload["lat"] = record.lat
        payload["lon"] = record.lon
    if record.geohash:
        payload["geohash"] = record.geohash
    return payload


def write_records(path: Path, records: Iterable[TextRecord]) -> Path:
    return write_jsonl(path, (record_payload(record) for record in records))


def write_labels(path: Path, labels: Mapping[str, str]) -> Path:
    return write_csv(path, ("record_id", "true_language"), sorted(labels.items()))


def write_predictions(path: Path, predictions: Iterable[LanguagePrediction]) -> Path:
    return write_jsonl(
        path,
        (
            {"id": p.record_id, "language": p.language, "confidence": round(p.confidence, 6)}
            for p in predictions
        ),
    )


def evaluation_rows(model_id: str, report: EvaluationReport) -> List[List[object]]:
    rows: List[List[object]] = [
        [model_id, code, fmt_stat(s.precision), fmt_stat(s.recall), fmt_stat(s.f1), s.support]
        for code, s in sorted(report.per_language.items())
    ]
    support = sum(s.support for s in report.per_language.values())
    rows.append(
        [model_id, "macro", fmt_stat(report.macro_precision), fmt_stat(report.macro_recall), fmt_stat(report.macro_f1), support]
    )
    return rows


def write_evaluation(path: Path, reports: Mapping[str, EvaluationReport]) -> Path:
    rows: List[List[object]] = []
    for model_id in sorted(reports):
        rows.extend(evaluation_rows(model_id, reports[model_id]))
    return write_csv(path, ("model_id", "language", "precision", "recall", "f1", "support"), rows)


def write_agreement(out_dir: Path, report: AgreementReport) -> List[Path]:
    summary = write_csv(
        Path(out_dir) / "agreement_summary.csv",
        ("total", "mismatches", "mismatch_rate"),
        [[report.total, report.mismatches, fmt_stat(report.mismatch_rate)]],
    )
    pairs = write_csv(
        Path(out_dir) / "agreement_pairs.csv",
        ("lang_a", "lang_b", "count"),
        ([lang_a, lang_b, count] for (lang_a, lang_b), count in report.reclassification_pairs),
    )
    return [summary, pairs]


# ----------------------------------------------------------------------
# Catchments and diversity
# ----------------------------------------------------------------------
def write_assignments(path: Path, assignments: Iterable[Assignment]) -> Path:
    return write_csv(
        path,
        ("record_id", "point_name", "region", "distance_km"),
        ([a.record_id, a.point_name, a.region, fmt_distance(a.distance_km)] for a in assignments),
    )


def write_coverage(path: Path, report: CoverageReport) -> Path:
    rows: List[List[object]] = [
        [region, count, fmt_stat(report.region_shares[region])]
        for region, count in report.region_counts.items()
    ]
    rows.append(["OUTSIDE", report.outside, ""])
    return write_csv(path, ("region", "count", "share"), rows)


def cr_row(place: str, period: str, result: CRResult, total: int) -> List[object]:
    return [place, period, result.n, fmt_stat(result.value), result.band, total]


def write_diversity(path: Path, rows: Iterable[Sequence[object]]) -> Path:
    return write_csv(path, ("place", "period", "n", "cr_value", "band", "total_count"), rows)


def write_top_languages(path: Path, rankings: Mapping[str, Sequence[RankedLanguage]]) -> Path:
    rows = [
        [place, rank, item.language, item.count, fmt_stat(item.share)]
        for place in sorted(rankings)
        for rank, item in enumerate(rankings[place], start=1)
    ]
    return write_csv(path, ("place", "rank", "language", "count", "share"), rows)


def write_term_filter(path: Path, terms: Sequence[str], removed: int) -> Path:
    return write_csv(path, ("terms", "removed"), [[";".join(sorted(terms)), removed]])


# ----------------------------------------------------------------------
# Census comparison
# ----------------------------------------------------------------------
def write_census_cr(path: Path, rows: Iterable[Sequence[object]]) -> Path:
    return write_csv(path, ("geography", "year", "n", "cr_value", "band", "total_count"), rows)


def write_exclusions(path: Path, result: ExclusionResult) -> Path:
    return write_csv(
        path,
        ("language_label", "rows_dropped", "count_dropped"),
        ([label, len(rows), sum(row.count for row in rows)] for label, rows in result.manifest.items()),
    )


def write_correlations(path: Path, battery: Sequence[PairCorrelation]) -> Path:
    return write_csv(
        path,
        ("method", "pair_name", "rho", "n", "p_value", "stars"),
        (
            [
                p.method,
                p.pair_name,
                fmt_stat(p.result.rho),
                p.result.n_pairs,
                fmt_stat(p.result.p_value),
                p.result.stars,
            ]
            for p in battery
        ),
    )


def write_reference_checks(path: Path, checks: Sequence[ReferenceCheck]) -> Path:
    return write_csv(
        path,
        ("pair_name", "observed", "expected", "tolerance", "deviation", "within_tolerance"),
        (
            [
                c.pair_name,
                fmt_stat(c.observed),
                fmt_stat(c.expected),
                fmt_stat(c.tolerance),
                fmt_stat(c.deviation),
                str(c.within_tolerance).lower(),
            ]
            for c in checks
        ),
    )


# ----------------------------------------------------------------------
# Time series
# ----------------------------------------------------------------------
def series_rows(series: MonthlyCRSeries) -> List[List[object]]:
    rows: List[List[object]] = []
    for month in sorted(series.counts):
        result = series.cr.get(month)
        rows.append(
            [series.place, month[0], month[1], series.counts[month], fmt_stat(result.value) if result else ""]
        )
    return rows


def write_series(path: Path, all_series: Sequence[MonthlyCRSeries]) -> Path:
    rows: List[List[object]] = []
    for series in all_series:
        rows.extend(series_rows(series))
    return write_csv(path, ("place", "year", "month", "count", "cr_value"), rows)


def diagnostics_rows(place: str, diag: SeriesDiagnostics) -> List[List[object]]:
    rows: List[List[object]] = [[place, "outlier", y, m, "", ""] for y, m in diag.outlier_months]
    rows.extend([place, "gap", y, m, "", ""] for y, m in diag.gap_months)
    rows.append([place, "summary", "", "", fmt_stat(diag.max_mean_drift), str(diag.stationary_flag).lower()])
    return rows


def write_diagnostics(path: Path, diagnostics: Mapping[str, SeriesDiagnostics]) -> Path:
    rows: List[List[object]] = []
    for place in sorted(diagnostics):
        rows.extend(diagnostics_rows(place, diagnostics[place]))
    return write_csv(path, ("place", "kind", "year", "month", "max_mean_drift", "stationary_flag"), rows)


def write_language_series(
    path: Path, series: Mapping[str, Mapping[str, Mapping[Month, int]]]
) -> Path:
    rows = [
        [place, language, month[0], month[1], count]
        for place in sorted(series)
        for language in sorted(series[place])
        for month, count in sorted(series[place][language].items())
    ]
    return write_csv(path, ("place", "language", "year", "month", "count"), rows)
