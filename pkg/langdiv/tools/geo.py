"""Geohash codec and great-circle distances."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from langdiv.services.errors import ArgumentError, GeohashError
from langdiv.services.models import GeoPoint

EARTH_RADIUS_KM = 6371.0088
MAX_PRECISION = 15

_BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_DECODE_MAP = {char: index for index, char in enumerate(_BASE32)}
_BITS = (16, 8, 4, 2, 1)


class GeohashBox(NamedTuple):
    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    @property
    def center(self) -> GeoPoint:
        return GeoPoint((self.lat_min + self.lat_max) / 2, (self.lon_min + self.lon_max) / 2)

    def contains(self, point: GeoPoint) -> bool:
        return (
            self.lat_min <= point.lat <= self.lat_max
            and self.lon_min <= point.lon <= self.lon_max
        )


def geohash_encode(point: GeoPoint, precision: int = MAX_PRECISION) -> str:
    """Encode ``point`` with longitude-first bit interleaving.

    >>> geohash_encode(GeoPoint(57.64911, 10.40744), 11)
    'u4pruydqqvj'
    """
    if not 1 <= precision <= MAX_PRECISION:
        raise ArgumentError(f"geohash precision must be in [1, {MAX_PRECISION}], got {precision}")
    lat_interval = [-90.0, 90.0]
    lon_interval = [-180.0, 180.0]
    chars: list[str] = []
    ch = 0
    bit = 0
    even = True
    while len(chars) < precision:
        if even:
            mid = (lon_interval[0] + lon_interval[1]) / 2
            if point.lon > mid:
                ch |= _BITS[bit]
                lon_interval[0] = mid
            else:
                lon_interval[1] = mid
        else:
            mid = (lat_interval[0] + lat_interval[1]) / 2
            if point.lat > mid:
                ch |= _BITS[bit]
                lat_interval[0] = mid
            else:
                lat_interval[1] = mid
        even = not even
        if bit < 4:
            bit += 1
        else:
            chars.append(_BASE32[ch])
            bit = 0
            ch = 0
    return "".join(chars)


def geohash_decode(geohash: str) -> GeohashBox:
    if not geohash:
        raise GeohashError("geohash must be non-empty")
    lat_interval = [-90.0, 90.0]
    lon_interval = [-180.0, 180.0]
    even = True
    for char in geohash.lower():
        value = _DECODE_MAP.get(char)
        if value is None:
            raise GeohashError(f"invalid geohash character {char!r} in {geohash!r}")
        for mask in _BITS:
            interval = lon_interval if even else lat_interval
            mid = (interval[0] + interval[1]) / 2
            if value & mask:
                interval[0] = mid
            else:
                interval[1] = mid
            even = not even
    return GeohashBox(lat_interval[0], lat_interval[1], lon_interval[0], lon_interval[1])


def haversine_km(a: GeoPoint, b: GeoPoint) -> float:
    lat1, lon1, lat2, lon2 = map(math.radians, (a.lat, a.lon, b.lat, b.lon))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = math.sin(dlat / 2) ** 2 + math.cos(lat1) * math.cos(lat2) * math.sin(dlon / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


def haversine_km_matrix(
    lats: np.ndarray, lons: np.ndarray, point_lats: np.ndarray, point_lons: np.ndarray
) -> np.ndarray:
    """Distances of shape (records, points)."""
    lat1 = np.radians(np.asarray(lats, dtype=float))[:, None]
    lon1 = np.radians(np.asarray(lons, dtype=float))[:, None]
    lat2 = np.radians(np.asarray(point_lats, dtype=float))[None, :]
    lon2 = np.radians(np.asarray(point_lons, dtype=float))[None, :]
    h = np.sin((lat2 - lat1) / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2
    return 2 * EARTH_RADIUS_KM * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def destination_point(origin: GeoPoint, bearing_rad: float, distance_km: float) -> GeoPoint:
    """Point reached from ``origin`` along a great circle."""
    lat1 = math.radians(origin.lat)
    lon1 = math.radians(origin.lon)
    angular = distance_km / EARTH_RADIUS_KM
    lat2 = math.asin(
        math.sin(lat1) * math.cos(angular) + math.cos(lat1) * math.sin(angular) * math.cos(bearing_rad)
    )
    lon2 = lon1 + math.atan2(
        math.sin(bearing_rad) * math.sin(angular) * math.cos(lat1),
        math.cos(angular) - math.sin(lat1) * math.sin(lat2),
    )
    lon_deg = (math.degrees(lon2) + 540.0) % 360.0 - 180.0
    return GeoPoint(math.degrees(lat2), lon_deg)
