import math

import numpy as np
import pytest

from langdiv.services.errors import ArgumentError, GeohashError, RecordParseError, RecordValidationError
from langdiv.services.models import GeoPoint
from langdiv.services.preprocess import iter_csv_rows, parse_record, read_records
from langdiv.tools.geo import (
    EARTH_RADIUS_KM,
    destination_point,
    geohash_decode,
    geohash_encode,
    haversine_km,
    haversine_km_matrix,
)

WELLINGTON = GeoPoint(-41.2889, 174.7772)
LOWER_HUTT = GeoPoint(-41.2167, 174.9167)


def test_parse_record_maps_fields():
    record = parse_record(
        '{"id":"1","text":"kia ora","timestamp":"2020-09-01T00:00:00Z","lat":-41.29,"lon":174.78}'
    )
    assert record.id == "1"
    assert record.text == "kia ora"
    assert (record.lat, record.lon) == (-41.29, 174.78)
    assert record.timestamp.utcoffset().total_seconds() == 0
    assert record.timestamp.day == 1


def test_parse_record_naive_timestamp_is_utc():
    record = parse_record('{"id":"2","text":"hi there","timestamp":"2020-09-01T10:00:00","geohash":"rbsm1"}')
    assert record.timestamp.utcoffset().total_seconds() == 0
    assert record.geohash == "rbsm1"
    assert not record.has_coordinates


def test_parse_record_latitude_out_of_range():
    with pytest.raises(RecordValidationError) as exc:
        parse_record('{"id":"1","text":"x","timestamp":"2020-09-01T00:00:00Z","lat":95.0,"lon":0}', 7)
    assert exc.value.line_number == 7
    assert exc.value.field == "lat"


def test_parse_record_missing_text():
    with pytest.raises(RecordParseError) as exc:
        parse_record('{"id":"1","timestamp":"2020-09-01T00:00:00Z","lat":0,"lon":0}', 3)
    assert exc.value.line_number == 3
    assert not isinstance(exc.value, RecordValidationError)


def test_parse_record_geohash_must_contain_coordinates():
    far_cell = geohash_encode(GeoPoint(10.0, 10.0), 6)
    line = f'{{"id":"1","text":"x","timestamp":"2020-09-01T00:00:00Z","lat":-41.0,"lon":174.0,"geohash":"{far_cell}"}}'
    with pytest.raises(RecordValidationError):
        parse_record(line)


def test_read_records_rejects_invalid_utf8(tmp_path):
    path = tmp_path / "records.jsonl"
    good = b'{"id":"1","text":"kia ora","timestamp":"2020-09-01T00:00:00Z","lat":-41.29,"lon":174.78}\n'
    path.write_bytes(good + b"\xff\xfe bad\n")
    with pytest.raises(RecordParseError) as exc:
        read_records(path)
    assert exc.value.line_number == 2
    assert exc.value.exit_code == 2


def test_read_records_strips_byte_order_mark(tmp_path):
    path = tmp_path / "records.jsonl"
    path.write_bytes(
        b'\xef\xbb\xbf{"id":"1","text":"kia ora","timestamp":"2020-09-01T00:00:00Z","geohash":"rbsm1"}\n\n'
    )
    assert [record.id for record in read_records(path)] == ["1"]


def test_csv_rows_keep_quoted_newlines_and_hash_data(tmp_path):
    path = tmp_path / "table.csv"
    path.write_text(
        '# provenance, with "quotes"\n'
        "\n"
        "name,note\n"
        '"Ōtaki","two\nlines"\n'
        "#hashtag,kept\n"
        "\n"
        "Levin,plain\n",
        encoding="utf-8",
    )
    rows = list(iter_csv_rows(path))
    assert rows == [
        (4, {"name": "Ōtaki", "note": "two\nlines"}),
        (6, {"name": "#hashtag", "note": "kept"}),
        (8, {"name": "Levin", "note": "plain"}),
    ]


def test_geohash_reference_vector():
    assert geohash_encode(GeoPoint(57.64911, 10.40744), 11) == "u4pruydqqvj"
    assert geohash_decode("u4pruydqqvj").contains(GeoPoint(57.64911, 10.40744))


def test_geohash_single_character_at_origin():
    code = geohash_encode(GeoPoint(0.0, 0.0), 1)
    assert len(code) == 1
    assert geohash_decode(code).contains(GeoPoint(0.0, 0.0))


def test_geohash_wellington_cell_contains_point():
    code = geohash_encode(WELLINGTON, 6)
    assert len(code) == 6
    assert code.startswith("rbsm")
    assert geohash_decode(code).contains(WELLINGTON)


def test_geohash_prefix_cells_nest():
    rng = np.random.default_rng(11)
    for lat, lon in zip(rng.uniform(-90, 90, 200), rng.uniform(-180, 180, 200)):
        point = GeoPoint(float(lat), float(lon))
        full = geohash_encode(point, 15)
        for k in (1, 5, 9, 15):
            assert full[:k] == geohash_encode(point, k)
            assert geohash_decode(full[:k]).contains(point)
            parent, child = geohash_decode(full[: max(1, k - 1)]), geohash_decode(full[:k])
            assert parent.lat_min <= child.lat_min <= child.lat_max <= parent.lat_max
            assert parent.lon_min <= child.lon_min <= child.lon_max <= parent.lon_max


def test_geohash_precision_bounds():
    with pytest.raises(ArgumentError):
        geohash_encode(WELLINGTON, 0)
    with pytest.raises(ArgumentError):
        geohash_encode(WELLINGTON, 16)


def test_geohash_decode_rejects_bad_alphabet():
    with pytest.raises(GeohashError):
        geohash_decode("a")
    with pytest.raises(GeohashError):
        geohash_decode("")


def test_haversine_identity_and_antipode():
    assert haversine_km(WELLINGTON, WELLINGTON) == 0.0
    antipode = haversine_km(GeoPoint(0.0, 0.0), GeoPoint(0.0, 180.0))
    assert antipode == pytest.approx(math.pi * EARTH_RADIUS_KM, abs=0.1)
    assert antipode == pytest.approx(20015.1, abs=0.1)


def test_haversine_wellington_lower_hutt():
    distance = haversine_km(WELLINGTON, LOWER_HUTT)
    assert 10.0 < distance < 20.0
    assert distance == pytest.approx(haversine_km(LOWER_HUTT, WELLINGTON))


def test_haversine_triangle_inequality():
    rng = np.random.default_rng(5)
    for _ in range(300):
        a, b, c = (GeoPoint(float(rng.uniform(-90, 90)), float(rng.uniform(-180, 180))) for _ in range(3))
        assert haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-6


def test_haversine_matrix_matches_scalar():
    lats = np.array([WELLINGTON.lat, 0.0])
    lons = np.array([WELLINGTON.lon, 0.0])
    matrix = haversine_km_matrix(lats, lons, np.array([LOWER_HUTT.lat]), np.array([LOWER_HUTT.lon]))
    assert matrix.shape == (2, 1)
    assert matrix[0, 0] == pytest.approx(haversine_km(WELLINGTON, LOWER_HUTT))
    assert matrix[1, 0] == pytest.approx(haversine_km(GeoPoint(0.0, 0.0), LOWER_HUTT))


def test_destination_point_distance():
    for distance in (0.0, 9.99, 49.9, 50.1):
        moved = destination_point(WELLINGTON, 1.0, distance)
        assert haversine_km(WELLINGTON, moved) == pytest.approx(distance, abs=1e-6)


def test_geopoint_range_check():
    with pytest.raises(ArgumentError):
        GeoPoint(-91.0, 0.0)
