from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Tuple

from langdiv.services.errors import ArgumentError, RecordValidationError
from langdiv.services.models import CollectionPoint
from langdiv.services.preprocess import (
    SETTLEMENT_TYPES,
    iter_csv_rows,
    read_language_corpus,
    read_points,
    require_columns,
    split_language_corpus,
)

DATA_DIR = Path(__file__).resolve().parents[1] / "data"

SOUTH_ISLAND_REGIONS = frozenset(
    {"West Coast", "Canterbury", "Otago", "Southland", "Tasman", "Marlborough", "Nelson"}
)


def data_path(name: str) -> Path:
    path = DATA_DIR / name
    if not path.exists():
        raise ArgumentError(f"bundled data file missing: {name}")
    return path


def island_for_region(region: str) -> str:
    return "south" if region in SOUTH_ISLAND_REGIONS else "north"


def _read_gazetteer(path: Path) -> Dict[str, Tuple[float, float, str]]:
    entries: Dict[str, Tuple[float, float, str]] = {}
    for line, row in iter_csv_rows(path):
        require_columns(path, row, ("name", "lat", "lon", "urban_rural"), line)
        settlement = row["urban_rural"].lower()
        if settlement not in SETTLEMENT_TYPES:
            raise RecordValidationError(f"unknown settlement type {row['urban_rural']!r}", line, "urban_rural")
        try:
            entries[row["name"]] = (float(row["lat"]), float(row["lon"]), settlement)
        except ValueError as exc:
            raise RecordValidationError(f"bad coordinates for {row['name']!r}", line, "lat") from exc
    return entries


def join_points(points_path: Path, gazetteer_path: Path) -> List[CollectionPoint]:
    """Attach gazetteer coordinates to a ``name,region`` point list."""
    gazetteer = _read_gazetteer(gazetteer_path)
    points: List[CollectionPoint] = []
    seen: set[str] = set()
    for line, row in iter_csv_rows(points_path):
        require_columns(points_path, row, ("name", "region"), line)
        name = row["name"]
        if name in seen:
            raise RecordValidationError(f"duplicate point name {name!r}", line, "name")
        if name not in gazetteer:
            raise RecordValidationError(f"point {name!r} not in gazetteer", line, "name")
        seen.add(name)
        lat, lon, settlement = gazetteer[name]
        points.append(
            CollectionPoint(name, row["region"], island_for_region(row["region"]), settlement, lat, lon)
        )
    if not points:
        raise ArgumentError(f"no collection points in {points_path}")
    return points


def load_points(path: Path | None = None, gazetteer: Path | None = None) -> List[CollectionPoint]:
    """Points from a full points CSV, a ``name,region`` list plus gazetteer, or the bundled set."""
    if path is None:
        return join_points(data_path("table5_points.csv"), data_path("gazetteer.csv"))
    if gazetteer is not None:
        return join_points(path, gazetteer)
    return read_points(path)


def seed_corpus_dir() -> Path:
    return data_path("seed")


def load_seed_splits(
    directory: Path | None = None,
) -> Tuple[Dict[str, List[str]], Dict[str, List[str]]]:
    return split_language_corpus(read_language_corpus(directory or seed_corpus_dir()))


def sentence_pool(directory: Path | None = None) -> Dict[str, List[str]]:
    """Held-out seed sentences, disjoint from every training split."""
    return load_seed_splits(directory)[1]


def bundled_census() -> Path:
    return data_path("census_national.csv")


def bundled_crosswalk() -> Path:
    return data_path("crosswalk.csv")


def bundled_tables() -> Tuple[Path, Path, Path]:
    return data_path("table4.csv"), data_path("table5.csv"), data_path("table6.csv")


def bundled_references() -> Path:
    return data_path("reference_correlations.csv")


def bundled_profiles() -> Path:
    return data_path("synth_profiles.json")
