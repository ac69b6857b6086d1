from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import AbstractSet, Dict, FrozenSet, List, Mapping, Sequence, Tuple

from langdiv.services import reports, sources
from langdiv.services.config import RunConfig
from langdiv.services.errors import ArgumentError, DiagnosticError, EmptyCellError, MissingStageError
from langdiv.services.models import (
    CollectionPoint,
    LanguagePrediction,
    Month,
    MonthlyCRSeries,
    SeriesDiagnostics,
    TextRecord,
)
from langdiv.services.preprocess import (
    labeled_texts,
    read_assignments,
    read_labels,
    read_language_corpus,
    read_predictions,
    read_records,
    split_language_corpus,
)
from langdiv.services.workers import ordered_map
from langdiv.tools import catchment, census, diversity, langid, synthgen, timeseries

LOGGER = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelPreset:
    model_id: str
    excluded_languages: FrozenSet[str] = frozenset()
    language_weights: Mapping[str, float] = field(default_factory=dict)


# Both presets share one corpus. The second adds Tongan and up-weights the
# Austronesian seeds, so Polynesian text is where the two models disagree.
MODEL_PRESETS: Dict[str, ModelPreset] = {
    "idnet": ModelPreset("idnet", excluded_languages=frozenset({"ton"})),
    "pacificlid": ModelPreset(
        "pacificlid",
        language_weights={"mri": 3.0, "smo": 3.0, "ton": 3.0, "tgl": 3.0},
    ),
}


def select_predictions(
    mode: str,
    predictions_a: Sequence[LanguagePrediction],
    predictions_b: Sequence[LanguagePrediction] | None,
) -> List[LanguagePrediction]:
    """Prediction set for one mode; agreement keeps model A's labels on agreed records."""
    if mode == "model_a":
        return list(predictions_a)
    if predictions_b is None:
        raise ArgumentError(f"mode {mode} needs --predictions-b")
    if mode == "model_b":
        return list(predictions_b)
    if mode == "agreement":
        agreed = langid.agreed_record_ids(predictions_a, predictions_b)
        return [p for p in predictions_a if p.record_id in agreed]
    raise ArgumentError(f"unknown mode {mode!r}")


class PipelineService:
    """Runs pipeline stages against a resolved :class:`RunConfig` and writes their outputs."""

    def __init__(self, config: RunConfig) -> None:
        self.config = config
        self.out_dir = Path(config.out_dir)

    # ------------------------------------------------------------------
    # Input helpers
    # ------------------------------------------------------------------
    def _require(self, name: str) -> Path:
        value = getattr(self.config, name)
        if value is None:
            raise ArgumentError(f"--{name.replace('_', '-')} is required for this command")
        return value

    def _points(self) -> List[CollectionPoint]:
        return sources.load_points(self.config.points, self.config.gazetteer)

    def _records(self) -> List[TextRecord]:
        return read_records(self._require("records"))

    def _predictions(self) -> Tuple[List[LanguagePrediction], List[LanguagePrediction] | None]:
        predictions_a = read_predictions(self._require("predictions_a"))
        predictions_b = read_predictions(self.config.predictions_b) if self.config.predictions_b else None
        return predictions_a, predictions_b

    def _chunk_size(self, count: int) -> int:
        return max(1, -(-count // (self.config.jobs * 4)))

    def _apply_term_filter(
        self, predictions: List[LanguagePrediction], terms: Sequence[str]
    ) -> List[LanguagePrediction]:
        if not terms:
            return predictions
        result = diversity.filter_terms(self._records(), terms)
        kept = {record.id for record in result.kept}
        reports.write_term_filter(self.out_dir / "term_filter.csv", terms, result.removed)
        return [p for p in predictions if p.record_id in kept]

    # ------------------------------------------------------------------
    # Language identification
    # ------------------------------------------------------------------
    def train_models(
        self,
        presets: Sequence[str],
        ngram_range: Tuple[int, int] = (1, 4),
        alpha: float = 0.1,
        sample_len: int = langid.DEFAULT_SAMPLE_LEN,
    ) -> Dict[str, langid.LanguageModel]:
        corpus_dir = self.config.corpus or sources.seed_corpus_dir()
        train_split, heldout_split = split_language_corpus(read_language_corpus(corpus_dir))
        models: Dict[str, langid.LanguageModel] = {}
        evaluations = {}
        for name in presets:
            if name not in MODEL_PRESETS:
                raise ArgumentError(f"unknown model preset {name!r}")
            preset = MODEL_PRESETS[name]
            languages = sorted(set(train_split) - preset.excluded_languages)
            config = langid.TrainingConfig(ngram_range, alpha, dict(preset.language_weights))
            model = langid.train_model(
                labeled_texts({code: train_split[code] for code in languages}),
                config,
                model_id=preset.model_id,
                languages=languages,
            )
            model.save(self.out_dir / f"{preset.model_id}.lidm")
            test = labeled_texts({code: heldout_split[code] for code in languages if heldout_split[code]})
            evaluations[preset.model_id] = langid.evaluate(model, test, sample_len)
            LOGGER.info("%s macro F1 %.4f", preset.model_id, evaluations[preset.model_id].macro_f1)
            models[preset.model_id] = model
        reports.write_evaluation(self.out_dir / "lid_evaluation.csv", evaluations)
        return models

    def classify(self, model_path: Path | None = None) -> Path:
        model = langid.LanguageModel.load(model_path or self._require("model_a"))
        records = self._records()
        predictions = ordered_map(
            partial(langid.classify_records, model),
            records,
            self.config.jobs,
            self._chunk_size(len(records)),
        )
        return reports.write_predictions(self.out_dir / f"predictions_{model.model_id}.jsonl", predictions)

    def compare_models(self) -> List[Path]:
        predictions_a, predictions_b = self._predictions()
        if predictions_b is None:
            raise ArgumentError("--predictions-b is required for this command")
        report = langid.compare_models(predictions_a, predictions_b)
        LOGGER.info("mismatch rate %.6f over %d records", report.mismatch_rate, report.total)
        written = reports.write_agreement(self.out_dir, report)
        if self.config.labels is not None:
            labels = read_labels(self.config.labels)
            scores = {
                "model_a": langid.score_predictions(predictions_a, labels),
                "model_b": langid.score_predictions(predictions_b, labels),
            }
            for name, score in scores.items():
                LOGGER.info("%s macro F1 %.4f against %s", name, score.macro_f1, self.config.labels.name)
            written.append(reports.write_evaluation(self.out_dir / "label_scores.csv", scores))
        return written

    # ------------------------------------------------------------------
    # Catchments and diversity
    # ------------------------------------------------------------------
    def assign(self) -> List[Path]:
        records = self._records()
        points = self._points()
        regions = census.load_region_table(self.config.table5 or sources.bundled_tables()[1], ("tweets",))
        uncovered = catchment.regions_without_points(points, regions)
        if uncovered:
            LOGGER.warning(
                "no collection points in %s; their records go to neighbouring catchments or OUTSIDE",
                ", ".join(uncovered),
            )
        assignments = ordered_map(
            partial(catchment.assign_many, points=points, radius_km=self.config.radius_km),
            records,
            self.config.jobs,
            self._chunk_size(len(records)),
        )
        return [
            reports.write_assignments(self.out_dir / "assignments.csv", assignments),
            reports.write_coverage(self.out_dir / "coverage.csv", catchment.coverage(assignments)),
        ]

    def _grouped_predictions(
        self, level: str, predictions: Sequence[LanguagePrediction]
    ) -> Dict[str, List[LanguagePrediction]]:
        assignments = read_assignments(self._require("assignments"))
        rolled = catchment.rollup(assignments, self._points(), level)
        index = catchment.group_index(rolled)
        grouped: Dict[str, List[LanguagePrediction]] = {key: [] for key in rolled.groups}
        for prediction in predictions:
            key = index.get(prediction.record_id)
            if key is not None:
                grouped[key].append(prediction)
        if rolled.outside:
            LOGGER.info("%d records outside every catchment left out of %s groups", len(rolled.outside), level)
        return grouped

    def diversity(
        self,
        level: str = "region",
        exclude_terms: Sequence[str] = (),
        exclude_languages: AbstractSet[str] = frozenset(),
        top: int = 10,
    ) -> List[Path]:
        predictions_a, predictions_b = self._predictions()
        selected = select_predictions(self.config.mode, predictions_a, predictions_b)
        selected = self._apply_term_filter(selected, exclude_terms)
        grouped = self._grouped_predictions(level, selected)

        rows: List[List[object]] = []
        rankings = {}
        for place in sorted(grouped):
            hist = diversity.histogram(grouped[place], place, "all", exclude_languages)
            try:
                result = diversity.concentration_ratio(hist, self.config.cr_n)
            except EmptyCellError:
                LOGGER.info("skipping empty cell %s", place)
                continue
            rows.append(reports.cr_row(place, "all", result, hist.total))
            rankings[place] = diversity.top_k(hist, top)
        suffix = self.config.mode
        return [
            reports.write_diversity(self.out_dir / f"diversity_{suffix}.csv", rows),
            reports.write_top_languages(self.out_dir / f"top_languages_{suffix}.csv", rankings),
        ]

    # ------------------------------------------------------------------
    # Time series
    # ------------------------------------------------------------------
    def timeseries(
        self,
        level: str = "national",
        languages: Sequence[str] = (),
        exclude_terms: Sequence[str] = (),
        exclude_languages: AbstractSet[str] = frozenset(),
        k_mad: float = 5.0,
        windows: int = 4,
        drift_threshold: float = 0.10,
    ) -> List[Path]:
        mode = self.config.mode
        predictions_a, predictions_b = self._predictions()
        if mode != "model_a" and predictions_b is None:
            raise ArgumentError(f"mode {mode} needs --predictions-b")
        kept_a = self._apply_term_filter(list(predictions_a), exclude_terms)
        kept_ids = {p.record_id for p in kept_a}
        kept_b = [p for p in predictions_b if p.record_id in kept_ids] if predictions_b is not None else None

        records = {record.id: record for record in self._records()}
        grouped = self._grouped_predictions(level, kept_a)
        frequency_source = kept_b if mode == "model_b" and kept_b is not None else kept_a
        known = self._known_languages(frequency_source)
        for code in languages:
            if code not in known:
                raise ArgumentError(f"unknown language code {code!r}")
        wanted = sorted(set(languages)) if languages else sorted(known)

        all_series: List[MonthlyCRSeries] = []
        diagnostics: Dict[str, SeriesDiagnostics] = {}
        frequencies: Dict[str, Dict[str, Dict[Month, int]]] = {}
        for place in sorted(grouped):
            ids = {p.record_id for p in grouped[place]}
            buckets = timeseries.bucket_monthly(
                (records[i] for i in sorted(ids) if i in records), place, self.config.tz_offset
            )
            if not buckets:
                continue
            series = timeseries.monthly_cr_series(
                buckets,
                [p for p in kept_a if p.record_id in ids],
                [p for p in kept_b if p.record_id in ids] if kept_b is not None else None,
                self.config.cr_n,
                mode,
                exclude_languages,
            )
            all_series.append(series)
            try:
                diagnostics[place] = timeseries.diagnostics(
                    series.counts,
                    {month: result.value for month, result in series.cr.items()},
                    k_mad,
                    windows,
                    drift_threshold,
                )
            except DiagnosticError as exc:
                LOGGER.warning("%s: no diagnostics (%s)", place, exc)
            place_predictions = [p for p in frequency_source if p.record_id in ids]
            frequencies[place] = {
                code: timeseries.language_frequency_series(buckets, place_predictions, code, known)
                for code in wanted
            }
        return [
            reports.write_series(self.out_dir / f"series_{mode}.csv", all_series),
            reports.write_diagnostics(self.out_dir / f"diagnostics_{mode}.csv", diagnostics),
            reports.write_language_series(self.out_dir / f"language_series_{mode}.csv", frequencies),
        ]

    def _known_languages(self, predictions: Sequence[LanguagePrediction]) -> FrozenSet[str]:
        model_path = self.config.model_b if self.config.mode == "model_b" else self.config.model_a
        if model_path is not None:
            return frozenset(langid.LanguageModel.load(model_path).languages)
        return frozenset(p.language for p in predictions if p.language != langid.UNDETERMINED)

    # ------------------------------------------------------------------
    # Census comparison
    # ------------------------------------------------------------------
    def compare_census(
        self,
        years: Sequence[int] | None = None,
        top: int = 10,
        reference_method: str = "pearson",
    ) -> List[Path]:
        """Census CR for each year (all years by default) plus both correlation batteries.

        Reference checks run against the ``reference_method`` battery.
        """
        crosswalk = census.load_crosswalk(self.config.crosswalk or sources.bundled_crosswalk())
        table = census.load_census(self.config.census or sources.bundled_census(), crosswalk)
        if years:
            table = census.select_years(table, years)
        excluded = census.apply_exclusions(table, self.config.exclusion_policy())

        cr_rows: List[List[object]] = []
        rankings = {}
        for year in census.census_years(excluded.table):
            geographies = census.census_geographies(excluded.table, year)
            for geography in geographies:
                hist = census.census_histogram(excluded.table, geography, year)
                result = diversity.concentration_ratio(hist, self.config.cr_n)
                cr_rows.append([geography, year, result.n, reports.fmt_stat(result.value), result.band, hist.total])
                rankings[f"{geography} {year}"] = diversity.top_k(hist, top)
            LOGGER.info("census %d: CR computed for %d geographies", year, len(geographies))

        default4, default5, default6 = sources.bundled_tables()
        regional = census.load_region_table(self.config.table4 or default4, ("census", "idnet", "pacificlid"))
        profiles = census.load_region_profiles(self.config.table5 or default5, self.config.table6 or default6)
        columns = [
            {region: values[name] for region, values in regional.items()}
            for name in ("census", "idnet", "pacificlid")
        ]
        batteries = {
            method: census.comparison_battery(*columns, profiles, method=method)
            for method in diversity.CORRELATION_METHODS
        }
        if reference_method not in batteries:
            raise ArgumentError(f"unknown correlation method {reference_method!r}")
        references = census.load_reference_correlations(self.config.references or sources.bundled_references())
        checks = census.check_against_reference(batteries[reference_method], references)
        battery = [pair for method in sorted(batteries) for pair in batteries[method]]
        return [
            reports.write_census_cr(self.out_dir / "census_cr.csv", cr_rows),
            reports.write_exclusions(self.out_dir / "census_exclusions.csv", excluded),
            reports.write_top_languages(self.out_dir / "census_top_languages.csv", rankings),
            reports.write_correlations(self.out_dir / "correlations.csv", battery),
            reports.write_reference_checks(self.out_dir / "reference_checks.csv", checks),
        ]

    # ------------------------------------------------------------------
    # Synthetic corpora
    # ------------------------------------------------------------------
    def synth(self, months: Sequence[Month]) -> List[Path]:
        profiles = synthgen.load_profiles(self.config.profiles or sources.bundled_profiles())
        pool = sources.sentence_pool(self.config.pool)
        corpus = synthgen.generate(profiles, months, self.config.seed, pool)
        records = synthgen.with_geohashes(corpus.records)
        return [
            reports.write_records(self.out_dir / "synthetic_records.jsonl", records),
            reports.write_labels(self.out_dir / "synthetic_labels.csv", corpus.labels),
            reports.write_text(self.out_dir / "synthetic_profiles.json", synthgen.profiles_to_json(profiles)),
        ]

    # ------------------------------------------------------------------
    # Report
    # ------------------------------------------------------------------
    def report(self, run_dir: Path | None = None) -> List[Path]:
        """Summarize earlier stage outputs found in ``run_dir``."""
        source = Path(run_dir or self.out_dir)
        diversity_files = sorted(source.glob("diversity_*.csv"))
        series_files = sorted(source.glob("series_*.csv"))
        if not diversity_files:
            raise MissingStageError("diversity", source / "diversity_<mode>.csv")
        if not series_files:
            raise MissingStageError("timeseries", source / "series_<mode>.csv")

        lines: List[str] = ["langdiv report", ""]
        lines.append("[diversity]")
        for path in diversity_files:
            mode = path.stem.removeprefix("diversity_")
            for row in reports.read_csv(path, "diversity"):
                lines.append(
                    f"{mode} {row['place']} {row['period']} CR_{row['n']}={row['cr_value']} "
                    f"band={row['band']} total={row['total_count']}"
                )
        lines.append("")

        figure_cr: List[List[object]] = []
        lines.append("[monthly series]")
        for path in series_files:
            mode = path.stem.removeprefix("series_")
            rows = reports.read_csv(path, "timeseries")
            skipped = sum(1 for row in rows if row["cr_value"] == "")
            places = sorted({row["place"] for row in rows})
            lines.append(f"{mode} places={len(places)} months={len(rows)} skipped={skipped}")
            figure_cr.extend(
                [mode, row["place"], row["year"], row["month"], row["count"], row["cr_value"]] for row in rows
            )
        lines.append("")

        figure_diag: List[List[object]] = []
        lines.append("[diagnostics]")
        for path in sorted(source.glob("diagnostics_*.csv")):
            mode = path.stem.removeprefix("diagnostics_")
            rows = reports.read_csv(path, "timeseries")
            for row in rows:
                figure_diag.append([mode, *(row[key] for key in ("place", "kind", "year", "month", "max_mean_drift", "stationary_flag"))])
                if row["kind"] == "summary":
                    outliers = sum(1 for r in rows if r["place"] == row["place"] and r["kind"] == "outlier")
                    gaps = sum(1 for r in rows if r["place"] == row["place"] and r["kind"] == "gap")
                    lines.append(
                        f"{mode} {row['place']} stationary={row['stationary_flag']} "
                        f"drift={row['max_mean_drift']} outliers={outliers} gaps={gaps}"
                    )
        lines.append("")

        figure_freq: List[List[object]] = []
        for path in sorted(source.glob("language_series_*.csv")):
            mode = path.stem.removeprefix("language_series_")
            figure_freq.extend(
                [mode, row["place"], row["language"], row["year"], row["month"], row["count"]]
                for row in reports.read_csv(path, "timeseries")
            )

        agreement = source / "agreement_summary.csv"
        lines.append("[model agreement]")
        if agreement.is_file():
            row = reports.read_csv(agreement, "compare-models")[0]
            lines.append(f"total={row['total']} mismatches={row['mismatches']} rate={row['mismatch_rate']}")
        else:
            lines.append("not run")
        lines.append("")

        correlations = source / "correlations.csv"
        lines.append("[correlations]")
        if correlations.is_file():
            for row in reports.read_csv(correlations, "compare-census"):
                stars = "*" * int(row["stars"])
                lines.append(
                    f"{row['method']} {row['pair_name']} rho={row['rho']}{stars} n={row['n']} p={row['p_value']}"
                )
            checks = source / "reference_checks.csv"
            if checks.is_file():
                for row in reports.read_csv(checks, "compare-census"):
                    flag = "ok" if row["within_tolerance"] == "true" else "DEVIATES"
                    lines.append(
                        f"reference {row['pair_name']} expected={row['expected']} "
                        f"deviation={row['deviation']} {flag}"
                    )
        else:
            lines.append("not run")

        report_dir = self.out_dir / "report"
        return [
            reports.write_text(report_dir / "summary.txt", "\n".join(lines)),
            reports.write_csv(
                report_dir / "figure_language_frequency.csv",
                ("mode", "place", "language", "year", "month", "count"),
                figure_freq,
            ),
            reports.write_csv(
                report_dir / "figure_monthly_cr.csv",
                ("mode", "place", "year", "month", "count", "cr_value"),
                figure_cr,
            ),
            reports.write_csv(
                report_dir / "figure_diagnostics.csv",
                ("mode", "place", "kind", "year", "month", "max_mean_drift", "stationary_flag"),
                figure_diag,
            ),
        ]
