import json
from collections import Counter

import numpy as np
import pytest

from langdiv.services import sources
from langdiv.services.errors import ArgumentError, GenerationError
from langdiv.services.models import CollectionPoint, GeoPoint, LanguagePrediction, RegionMixProfile
from langdiv.services.preprocess import parse_record
from langdiv.services.reports import record_payload
from langdiv.tools import catchment, diversity, langid, synthgen, timeseries
from langdiv.tools.geo import geohash_decode, haversine_km

AUCKLAND = GeoPoint(-36.8485, 174.7633)
WELLINGTON = GeoPoint(-41.2865, 174.7762)
CHRISTCHURCH = GeoPoint(-43.5321, 172.6362)


def _profile(region, anchor, volume, mixture, overrides=None):
    return RegionMixProfile(region, anchor, volume, mixture, overrides or {})


def _months(count, start=(2019, 1)):
    months = [start]
    while len(months) < count:
        months.append(timeseries.next_month(months[-1]))
    return months


@pytest.fixture(scope="module")
def pool():
    return sources.sentence_pool()


def test_analytic_cr_examples():
    assert synthgen.analytic_cr({"eng": 1.0}, 3) == 1.0
    assert synthgen.analytic_cr({"a": 0.6, "b": 0.25, "c": 0.1, "d": 0.05}, 2) == pytest.approx(0.85)
    uniform = {f"l{k:02d}": 1 / 12 for k in range(12)}
    assert synthgen.analytic_cr(uniform, 10) == pytest.approx(10 / 12)


def test_mixture_validation():
    with pytest.raises(ArgumentError):
        synthgen.validate_mixture({"eng": 0.5, "mri": 0.4})
    with pytest.raises(ArgumentError):
        synthgen.validate_mixture({"eng": 1.2, "mri": -0.2})
    with pytest.raises(ArgumentError):
        synthgen.validate_mixture({})


def test_pool_is_disjoint_from_training(seed_splits, pool):
    train, _ = seed_splits
    for code, sentences in pool.items():
        assert sentences
        assert not set(sentences) & set(train[code])


def test_degenerate_single_language(pool):
    profile = _profile("Auckland", AUCKLAND, 100, {"mri": 1.0})
    corpus = synthgen.generate([profile], [(2020, 9)], 1, pool)
    assert len(corpus.records) == 100
    assert set(corpus.labels.values()) == {"mri"}
    point = CollectionPoint("Auckland", "Auckland", "north", "urban", AUCKLAND.lat, AUCKLAND.lon)
    assignments = catchment.assign_many(corpus.records, [point])
    assert all(a.point_name == "Auckland" for a in assignments)
    assert max(a.distance_km for a in assignments) <= synthgen.JITTER_RADIUS_KM + 1e-3


def _dump(corpus):
    return [json.dumps(record_payload(record)) for record in synthgen.with_geohashes(corpus.records)]


def test_generation_is_deterministic(pool):
    profiles = [_profile("Auckland", AUCKLAND, 50, {"eng": 0.7, "mri": 0.2, "smo": 0.1})]
    first = synthgen.generate(profiles, _months(3), 99, pool)
    second = synthgen.generate(profiles, _months(3), 99, pool)
    assert _dump(first) == _dump(second)
    assert first.labels == second.labels
    other = synthgen.generate(profiles, _months(3), 100, pool)
    assert _dump(first) != _dump(other)


def test_profile_streams_are_independent(pool):
    first = _profile("Auckland", AUCKLAND, 30, {"eng": 0.5, "mri": 0.5})
    second = _profile("Wellington", WELLINGTON, 30, {"eng": 0.5, "smo": 0.5})
    alone = synthgen.generate([first], _months(2), 5, pool)
    together = synthgen.generate([first, second], _months(2), 5, pool)
    assert together.records[: len(alone.records)] == alone.records


def test_records_stay_in_month_and_radius(pool):
    profile = _profile("Wellington", WELLINGTON, 200, {"eng": 0.5, "fra": 0.5})
    corpus = synthgen.generate([profile], [(2020, 2)], 3, pool)
    for record in corpus.records:
        assert (record.timestamp.year, record.timestamp.month) == (2020, 2)
        assert haversine_km(WELLINGTON, GeoPoint(record.lat, record.lon)) <= 10.0 + 1e-3
        assert record.id.startswith("syn-00-")


def test_empirical_frequencies_follow_mixture(pool):
    mixture = {"eng": 0.7, "mri": 0.2, "smo": 0.1}
    corpus = synthgen.generate([_profile("Auckland", AUCKLAND, 10_000, mixture)], [(2021, 5)], 8, pool)
    counts = Counter(corpus.labels.values())
    for code, share in mixture.items():
        assert counts[code] / 10_000 == pytest.approx(share, abs=0.02)


def test_missing_pool_language(pool):
    profile = _profile("Auckland", AUCKLAND, 10, {"eng": 0.5, "xho": 0.5})
    with pytest.raises(GenerationError) as exc:
        synthgen.generate([profile], [(2020, 1)], 0, pool)
    assert "xho" in str(exc.value)


def test_with_geohashes_round_trip(pool):
    corpus = synthgen.generate([_profile("Auckland", AUCKLAND, 20, {"eng": 1.0})], [(2020, 1)], 4, pool)
    for record in synthgen.with_geohashes(corpus.records):
        assert len(record.geohash) == 15
        assert geohash_decode(record.geohash).contains(GeoPoint(record.lat, record.lon))
        reparsed = parse_record(json.dumps(record_payload(record)))
        assert reparsed == record


def test_profile_file_round_trip(tmp_path):
    profiles = synthgen.load_profiles(sources.bundled_profiles())
    assert [p.region for p in profiles] == ["Auckland", "Wellington", "Canterbury"]
    assert profiles[0].mixture_for(9)["mri"] > profiles[0].mixture_for(3)["mri"]
    path = tmp_path / "profiles.json"
    path.write_text(synthgen.profiles_to_json(profiles), encoding="utf-8")
    assert synthgen.load_profiles(path) == profiles


def test_profile_file_rejects_bad_mixture(tmp_path):
    path = tmp_path / "profiles.json"
    path.write_text(
        json.dumps({"profiles": [{"region": "X", "anchor": {"lat": 0, "lon": 0}, "monthly_volume": 1, "mixture": {"eng": 0.3}}]}),
        encoding="utf-8",
    )
    with pytest.raises(ArgumentError):
        synthgen.load_profiles(path)


def test_september_override_peaks_maori(pool):
    base = {"eng": 0.9, "mri": 0.1}
    profile = _profile("Wellington", WELLINGTON, 2_000, base, {9: {"eng": 0.7, "mri": 0.3}})
    months = _months(12, (2020, 1))
    corpus = synthgen.generate([profile], months, 21, pool)
    buckets = timeseries.bucket_monthly(corpus.records, "Wellington")
    truth = [LanguagePrediction(rid, code, 1.0) for rid, code in corpus.labels.items()]
    series = timeseries.language_frequency_series(buckets, truth, "mri", {"eng", "mri"})
    assert max(series, key=series.get) == (2020, 9)


def _closure_mixtures():
    # scripts unique to jpn, kor and ara keep the smallest shares apart from the Latin languages
    auckland = {
        "eng": 0.55, "smo": 0.08, "mri": 0.07, "hin": 0.06, "tgl": 0.05, "ton": 0.04, "fra": 0.04,
        "deu": 0.03, "spa": 0.03, "por": 0.02, "jpn": 0.01, "kor": 0.01, "ara": 0.01,
    }
    wellington = {
        "eng": 0.70, "mri": 0.08, "fra": 0.05, "deu": 0.04, "hin": 0.03, "smo": 0.03, "spa": 0.02,
        "tgl": 0.02, "por": 0.01, "ton": 0.01, "jpn": 0.005, "kor": 0.005,
    }
    canterbury = {"eng": 0.80, "deu": 0.06, "fra": 0.05, "mri": 0.04, "jpn": 0.03, "kor": 0.02}
    return auckland, wellington, canterbury


def test_end_to_end_closure(pacific_model, pool):
    auckland, wellington, canterbury = _closure_mixtures()
    profiles = [
        _profile("Auckland", AUCKLAND, 3_000, auckland),
        _profile("Wellington", WELLINGTON, 3_000, wellington),
        _profile("Canterbury", CHRISTCHURCH, 3_000, canterbury),
    ]
    months = _months(12, (2020, 1))
    corpus = synthgen.generate(profiles, months, 2024, pool)
    assert len(corpus.records) >= 100_000

    predictions = langid.classify_records(pacific_model, corpus.records)
    points = [CollectionPoint(p.region, p.region, "north", "urban", p.anchor.lat, p.anchor.lon) for p in profiles]
    assignments = catchment.assign_many(corpus.records, points)
    rolled = catchment.rollup(assignments, points, "region")
    assert not rolled.outside

    by_id = {record.id: record for record in corpus.records}
    for profile in profiles:
        ids = set(rolled.groups[profile.region])
        buckets = timeseries.bucket_monthly((by_id[i] for i in sorted(ids)), profile.region)
        series = timeseries.monthly_cr_series(buckets, [p for p in predictions if p.record_id in ids], None, n=10)
        expected = synthgen.analytic_cr(profile.mixture, 10)
        assert len(series.cr) == 12
        for result in series.cr.values():
            assert result.value == pytest.approx(expected, abs=0.02)


def _monthly_cr_variance(volume, pool, seeds=20):
    mixture = {"eng": 0.55, "mri": 0.1, "smo": 0.08, "hin": 0.06, "tgl": 0.05, "fra": 0.04, "deu": 0.03,
               "spa": 0.03, "por": 0.02, "jpn": 0.02, "kor": 0.01, "ara": 0.01}
    values = []
    for seed in range(seeds):
        corpus = synthgen.generate([_profile("Auckland", AUCKLAND, volume, mixture)], [(2020, 6)], seed, pool)
        truth = [LanguagePrediction(rid, code, 1.0) for rid, code in corpus.labels.items()]
        values.append(diversity.concentration_ratio(diversity.histogram(truth, "Auckland"), 10).value)
    return float(np.var(values))


def test_more_records_stabilise_monthly_cr(pool):
    assert _monthly_cr_variance(10_000, pool) < _monthly_cr_variance(100, pool)
