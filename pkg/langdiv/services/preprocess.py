from __future__ import annotations

import csv
import datetime as dt
import json
from pathlib import Path
from typing import Dict, Iterable, Iterator, List, Sequence, TextIO, Tuple

from pydantic import BaseModel, ConfigDict, ValidationError

from langdiv.services.errors import (
    ArgumentError,
    GeohashError,
    RecordParseError,
    RecordValidationError,
)
from langdiv.services.models import (
    OUTSIDE,
    Assignment,
    CollectionPoint,
    GeoPoint,
    LanguagePrediction,
    TextRecord,
)
from langdiv.tools.geo import MAX_PRECISION, geohash_decode

ISLANDS = frozenset({"north", "south"})
SETTLEMENT_TYPES = frozenset({"urban", "rural"})
HELDOUT_EVERY = 5


class _RecordPayload(BaseModel):
    model_config = ConfigDict(extra="ignore")

    id: str
    text: str
    timestamp: dt.datetime
    lat: float | None = None
    lon: float | None = None
    geohash: str | None = None


def _to_utc(value: dt.datetime) -> dt.datetime:
    if value.tzinfo is None:
        return value.replace(tzinfo=dt.timezone.utc)
    return value.astimezone(dt.timezone.utc)


def parse_record(line: str, line_number: int | None = None) -> TextRecord:
    try:
        payload = _RecordPayload.model_validate_json(line)
    except ValidationError as exc:
        first = exc.errors()[0]
        loc = ".".join(str(part) for part in first.get("loc", ())) or "record"
        raise RecordParseError(first.get("msg", "invalid record"), line_number, loc) from exc

    if not payload.text.strip():
        raise RecordParseError("text is empty", line_number, "text")
    if (payload.lat is None) != (payload.lon is None):
        missing = "lon" if payload.lon is None else "lat"
        raise RecordParseError("lat and lon must be given together", line_number, missing)
    if payload.lat is None and not payload.geohash:
        raise RecordParseError("record needs lat+lon or geohash", line_number, "lat")

    if payload.lat is not None and not -90.0 <= payload.lat <= 90.0:
        raise RecordValidationError(f"latitude {payload.lat} out of range", line_number, "lat")
    if payload.lon is not None and not -180.0 <= payload.lon <= 180.0:
        raise RecordValidationError(f"longitude {payload.lon} out of range", line_number, "lon")

    geohash = payload.geohash.lower() if payload.geohash else None
    if geohash is not None:
        if len(geohash) > MAX_PRECISION:
            raise RecordValidationError(
                f"geohash longer than {MAX_PRECISION} characters", line_number, "geohash"
            )
        try:
            box = geohash_decode(geohash)
        except GeohashError as exc:
            raise RecordValidationError(str(exc), line_number, "geohash") from exc
        if payload.lat is not None and payload.lon is not None:
            if not box.contains(GeoPoint(payload.lat, payload.lon)):
                raise RecordValidationError(
                    "geohash cell does not contain the coordinates", line_number, "geohash"
                )

    return TextRecord(
        id=payload.id,
        text=payload.text,
        timestamp=_to_utc(payload.timestamp),
        lat=payload.lat,
        lon=payload.lon,
        geohash=geohash,
    )


def _iter_lines(path: Path) -> Iterator[Tuple[int, str]]:
    with Path(path).open("rb") as handle:
        for number, raw in enumerate(handle, start=1):
            try:
                line = raw.decode("utf-8-sig" if number == 1 else "utf-8")
            except UnicodeDecodeError as exc:
                raise RecordParseError(f"invalid UTF-8 at byte {exc.start}", number, "line") from exc
            if line.strip():
                yield number, line


def read_records(path: Path) -> List[TextRecord]:
    records = [parse_record(line, number) for number, line in _iter_lines(path)]
    seen: set[str] = set()
    for record in records:
        if record.id in seen:
            raise RecordValidationError(f"duplicate record id {record.id!r}", None, "id")
        seen.add(record.id)
    return records


def iter_csv_rows(path: Path) -> Iterator[Tuple[int, Dict[str, str]]]:
    """Yield (line number, row) pairs.

    ``#`` lines are provenance comments only above the header. Quoted fields
    may span lines; the reported number is the line the row starts on.
    """
    with Path(path).open("r", encoding="utf-8-sig", newline="") as handle:
        try:
            yield from _csv_rows(handle)
        except UnicodeDecodeError as exc:
            raise RecordParseError(f"invalid UTF-8 in {Path(path).name}", None, "line") from exc


def _csv_rows(handle: TextIO) -> Iterator[Tuple[int, Dict[str, str]]]:
    offset = 0
    header = ""
    while not header:
        line = handle.readline()
        if not line:
            return
        offset += 1
        if line.strip() and not line.lstrip().startswith("#"):
            header = line
    fieldnames = [name.strip() for name in next(csv.reader([header]))]
    reader = csv.reader(handle)
    consumed = 0
    for values in reader:
        start = offset + consumed + 1
        consumed = reader.line_num
        if not any(value.strip() for value in values):
            continue
        yield start, {
            name: (values[idx].strip() if idx < len(values) else "")
            for idx, name in enumerate(fieldnames)
        }


def require_columns(path: Path, row: Dict[str, str], columns: Sequence[str], line: int) -> None:
    missing = [column for column in columns if column not in row]
    if missing:
        raise RecordParseError(f"{Path(path).name} is missing columns", line, ",".join(missing))


def _parse_float(value: str, line: int, field: str) -> float:
    try:
        return float(value)
    except ValueError as exc:
        raise RecordParseError(f"not a number: {value!r}", line, field) from exc


def read_points(path: Path) -> List[CollectionPoint]:
    points: List[CollectionPoint] = []
    names: set[str] = set()
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("name", "region", "island", "urban_rural", "lat", "lon"), line)
        name = row["name"]
        if not name:
            raise RecordValidationError("point name is empty", line, "name")
        if name in names:
            raise RecordValidationError(f"duplicate point name {name!r}", line, "name")
        if not row["region"]:
            raise RecordValidationError(f"point {name!r} has no region", line, "region")
        island = row["island"].lower()
        if island not in ISLANDS:
            raise RecordValidationError(f"unknown island {row['island']!r}", line, "island")
        settlement = row["urban_rural"].lower()
        if settlement not in SETTLEMENT_TYPES:
            raise RecordValidationError(
                f"unknown settlement type {row['urban_rural']!r}", line, "urban_rural"
            )
        lat = _parse_float(row["lat"], line, "lat")
        lon = _parse_float(row["lon"], line, "lon")
        if not -90.0 <= lat <= 90.0:
            raise RecordValidationError(f"latitude {lat} out of range", line, "lat")
        if not -180.0 <= lon <= 180.0:
            raise RecordValidationError(f"longitude {lon} out of range", line, "lon")
        names.add(name)
        points.append(CollectionPoint(name, row["region"], island, settlement, lat, lon))
    if not points:
        raise ArgumentError(f"no collection points in {path}")
    return points


def read_predictions(path: Path) -> List[LanguagePrediction]:
    predictions: List[LanguagePrediction] = []
    for number, line in _iter_lines(path):
        try:
            payload = json.loads(line)
            predictions.append(
                LanguagePrediction(
                    record_id=str(payload["id"]),
                    language=str(payload["language"]),
                    confidence=float(payload["confidence"]),
                )
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise RecordParseError(f"invalid prediction: {exc}", number, "prediction") from exc
    return predictions


def read_assignments(path: Path) -> List[Assignment]:
    assignments: List[Assignment] = []
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("record_id", "point_name", "region", "distance_km"), line)
        assignments.append(
            Assignment(
                record_id=row["record_id"],
                point_name=row["point_name"] or OUTSIDE,
                region=row["region"] or OUTSIDE,
                distance_km=_parse_float(row["distance_km"], line, "distance_km"),
            )
        )
    return assignments


def read_labels(path: Path) -> Dict[str, str]:
    labels: Dict[str, str] = {}
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("record_id", "true_language"), line)
        labels[row["record_id"]] = row["true_language"]
    return labels


def read_language_corpus(
    directory: Path, languages: Iterable[str] | None = None
) -> Dict[str, List[str]]:
    """Read ``<iso639-3>.txt`` files, one sample per line."""
    root = Path(directory)
    if not root.is_dir():
        raise ArgumentError(f"corpus directory not found: {root}")
    wanted = set(languages) if languages is not None else None
    corpus: Dict[str, List[str]] = {}
    for file_path in sorted(root.glob("*.txt")):
        code = file_path.stem
        if wanted is not None and code not in wanted:
            continue
        lines = file_path.read_text(encoding="utf-8").splitlines()
        corpus[code] = [line.strip() for line in lines if line.strip()]
    if wanted is not None:
        missing = sorted(wanted - set(corpus))
        if missing:
            raise ArgumentError(f"corpus has no file for: {', '.join(missing)}")
    return corpus


def split_language_corpus(
    corpus: Dict[str, List[str]], every: int = HELDOUT_EVERY
) -> Tuple[Dict[str, List[str]], Dict[str, List[str]]]:
    """Line i goes to the held-out split iff i % every == every - 1."""
    train: Dict[str, List[str]] = {}
    heldout: Dict[str, List[str]] = {}
    for code, lines in corpus.items():
        train[code] = [line for idx, line in enumerate(lines) if idx % every != every - 1]
        heldout[code] = [line for idx, line in enumerate(lines) if idx % every == every - 1]
    return train, heldout


def labeled_texts(corpus: Dict[str, List[str]]) -> List[Tuple[str, str]]:
    return [(code, text) for code in sorted(corpus) for text in corpus[code]]
