from __future__ import annotations

import logging
from collections import Counter, defaultdict
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple

import numpy as np

from langdiv.services.errors import ArgumentError, AssignmentError
from langdiv.services.models import (
    OUTSIDE,
    Assignment,
    CollectionPoint,
    CoverageReport,
    GeoPoint,
    Rollup,
    TextRecord,
)
from langdiv.tools.geo import geohash_decode, haversine_km_matrix

LOGGER = logging.getLogger(__name__)

DEFAULT_RADIUS_KM = 50.0
LEVELS = ("point", "region", "island", "urban_rural", "national")
NATIONAL = "national"


def record_location(record: TextRecord) -> GeoPoint:
    """Coordinates of a record, falling back to its geohash cell center."""
    if record.has_coordinates:
        return GeoPoint(record.lat, record.lon)  # type: ignore[arg-type]
    if record.geohash:
        return geohash_decode(record.geohash).center
    raise AssignmentError(f"record {record.id!r} has neither coordinates nor geohash")


def _ordered_points(points: Sequence[CollectionPoint]) -> List[CollectionPoint]:
    if not points:
        raise ArgumentError("catchment assignment needs at least one collection point")
    # name order makes argmin's first-hit rule the lexicographic tie-break
    return sorted(points, key=lambda point: point.name)


def assign_many(
    records: Sequence[TextRecord],
    points: Sequence[CollectionPoint],
    radius_km: float = DEFAULT_RADIUS_KM,
    chunk_size: int = 4096,
) -> List[Assignment]:
    """Nearest in-radius point for every record, in input order."""
    if radius_km <= 0:
        raise ArgumentError(f"radius_km must be > 0, got {radius_km}")
    ordered = _ordered_points(points)
    point_lats = np.asarray([point.lat for point in ordered], dtype=float)
    point_lons = np.asarray([point.lon for point in ordered], dtype=float)

    assignments: List[Assignment] = []
    for start in range(0, len(records), chunk_size):
        chunk = records[start : start + chunk_size]
        locations = [record_location(record) for record in chunk]
        distances = haversine_km_matrix(
            np.asarray([loc.lat for loc in locations], dtype=float),
            np.asarray([loc.lon for loc in locations], dtype=float),
            point_lats,
            point_lons,
        )
        nearest = np.argmin(distances, axis=1)
        for record, column, row in zip(chunk, nearest, distances):
            distance = float(row[column])
            if distance <= radius_km:
                point = ordered[int(column)]
                assignments.append(Assignment(record.id, point.name, point.region, distance))
            else:
                assignments.append(Assignment(record.id, OUTSIDE, OUTSIDE, distance))

    outside = sum(1 for assignment in assignments if assignment.is_outside)
    if outside:
        LOGGER.info("%d of %d records fall outside every catchment", outside, len(assignments))
    return assignments


def assign(
    record: TextRecord,
    points: Sequence[CollectionPoint],
    radius_km: float = DEFAULT_RADIUS_KM,
) -> Assignment:
    return assign_many([record], points, radius_km)[0]


def _group_key(point: CollectionPoint, level: str) -> str:
    if level == "point":
        return point.name
    if level == "region":
        return point.region
    if level == "island":
        return point.island
    if level == "urban_rural":
        return point.urban_rural
    return NATIONAL


def rollup(
    assignments: Iterable[Assignment],
    points: Sequence[CollectionPoint],
    level: str,
) -> Rollup:
    """Partition assigned record ids by point metadata; OUTSIDE ids are kept apart."""
    if level not in LEVELS:
        raise ArgumentError(f"unknown rollup level {level!r}; expected one of {', '.join(LEVELS)}")
    by_name = {point.name: point for point in points}
    groups: Dict[str, List[str]] = defaultdict(list)
    outside: List[str] = []
    for assignment in assignments:
        if assignment.is_outside:
            outside.append(assignment.record_id)
            continue
        point = by_name.get(assignment.point_name)
        if point is None:
            raise ArgumentError(
                f"assignment for {assignment.record_id!r} names unknown point {assignment.point_name!r}"
            )
        groups[_group_key(point, level)].append(assignment.record_id)
    return Rollup(
        level=level,
        groups={key: tuple(sorted(ids)) for key, ids in sorted(groups.items())},
        outside=tuple(sorted(outside)),
    )


def group_index(rolled: Rollup) -> Dict[str, str]:
    """record id -> group key for assigned records."""
    return {record_id: key for key, ids in rolled.groups.items() for record_id in ids}


def coverage_from_counts(region_counts: Mapping[str, int], outside: int = 0) -> CoverageReport:
    if outside < 0 or any(count < 0 for count in region_counts.values()):
        raise ArgumentError("coverage counts must be non-negative")
    ordered = dict(sorted(region_counts.items()))
    assigned = sum(ordered.values())
    shares = {region: (count / assigned if assigned else 0.0) for region, count in ordered.items()}
    return CoverageReport(
        total=assigned + outside,
        assigned=assigned,
        outside=outside,
        region_counts=ordered,
        region_shares=shares,
    )


def coverage(assignments: Iterable[Assignment]) -> CoverageReport:
    counts: Counter[str] = Counter()
    outside = 0
    for assignment in assignments:
        if assignment.is_outside:
            outside += 1
        else:
            counts[assignment.region] += 1
    return coverage_from_counts(counts, outside)


def regions_without_points(points: Sequence[CollectionPoint], regions: Iterable[str]) -> Tuple[str, ...]:
    covered = {point.region for point in points}
    return tuple(sorted(set(regions) - covered))
