"""
Synthetic geotagged corpora with known language mixtures.

Randomness comes from numpy's PCG64 bit generator. The run seed feeds a
``SeedSequence`` whose ``spawn`` children seed one generator per profile, so
each profile's stream is independent of how many other profiles exist after it.
Per month a profile draws, in order: language indices, sentence indices,
radial uniforms, bearings and within-month offsets.
"""

from __future__ import annotations

import calendar
import datetime as dt
import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Mapping, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from langdiv.services.errors import ArgumentError, GenerationError
from langdiv.services.models import GeoPoint, Month, RegionMixProfile, SyntheticCorpus, TextRecord
from langdiv.tools.geo import destination_point, geohash_encode

LOGGER = logging.getLogger(__name__)

JITTER_RADIUS_KM = 10.0
MIXTURE_TOLERANCE = 1e-9


def validate_mixture(mixture: Mapping[str, float]) -> None:
    if not mixture:
        raise ArgumentError("mixture must name at least one language")
    if any(weight < 0 for weight in mixture.values()):
        raise ArgumentError("mixture proportions must be non-negative")
    total = math.fsum(mixture.values())
    if abs(total - 1.0) > MIXTURE_TOLERANCE:
        raise ArgumentError(f"mixture proportions sum to {total}, expected 1")


class _AnchorPayload(BaseModel):
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)


class _ProfilePayload(BaseModel):
    model_config = ConfigDict(extra="forbid")

    region: str
    anchor: _AnchorPayload
    monthly_volume: int = Field(ge=0)
    mixture: Dict[str, float]
    seasonal_overrides: Dict[int, Dict[str, float]] = Field(default_factory=dict)

    @field_validator("seasonal_overrides")
    @classmethod
    def _months_in_range(cls, value: Dict[int, Dict[str, float]]) -> Dict[int, Dict[str, float]]:
        for month in value:
            if not 1 <= month <= 12:
                raise ValueError(f"override month {month} outside 1..12")
        return value


class _ProfileFile(BaseModel):
    profiles: List[_ProfilePayload]


def load_profiles(path: Path) -> List[RegionMixProfile]:
    try:
        payload = _ProfileFile.model_validate_json(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValidationError) as exc:
        raise ArgumentError(f"invalid profile file {path}: {exc}") from exc
    profiles = [
        RegionMixProfile(
            region=item.region,
            anchor=GeoPoint(item.anchor.lat, item.anchor.lon),
            monthly_volume=item.monthly_volume,
            mixture=dict(sorted(item.mixture.items())),
            seasonal_overrides={
                month: dict(sorted(mix.items())) for month, mix in sorted(item.seasonal_overrides.items())
            },
        )
        for item in payload.profiles
    ]
    for profile in profiles:
        validate_mixture(profile.mixture)
        for mix in profile.seasonal_overrides.values():
            validate_mixture(mix)
    return profiles


def profiles_to_json(profiles: Sequence[RegionMixProfile]) -> str:
    payload = {
        "profiles": [
            {
                "region": profile.region,
                "anchor": {"lat": profile.anchor.lat, "lon": profile.anchor.lon},
                "monthly_volume": profile.monthly_volume,
                "mixture": dict(profile.mixture),
                "seasonal_overrides": {str(k): dict(v) for k, v in profile.seasonal_overrides.items()},
            }
            for profile in profiles
        ]
    }
    return json.dumps(payload, indent=2, ensure_ascii=False)


def analytic_cr(mixture: Mapping[str, float], n: int) -> float:
    """Sum of the ``n`` largest proportions of a generating mixture."""
    if n < 1:
        raise ArgumentError(f"n must be >= 1, got {n}")
    validate_mixture(mixture)
    return float(min(1.0, math.fsum(sorted(mixture.values(), reverse=True)[:n])))


def _month_start(month: Month) -> dt.datetime:
    return dt.datetime(month[0], month[1], 1, tzinfo=dt.timezone.utc)


def _month_seconds(month: Month) -> int:
    return calendar.monthrange(month[0], month[1])[1] * 86_400


def generate(
    profiles: Sequence[RegionMixProfile],
    months: Sequence[Month],
    seed: int,
    sentence_pool: Mapping[str, Sequence[str]],
) -> SyntheticCorpus:
    """Sample records per profile and month; ids are ``syn-<profile>-<index>``."""
    for profile in profiles:
        validate_mixture(profile.mixture)
        needed = set(profile.mixture)
        for mix in profile.seasonal_overrides.values():
            validate_mixture(mix)
            needed.update(mix)
        missing = sorted(code for code in needed if not sentence_pool.get(code))
        if missing:
            raise GenerationError(f"profile {profile.region}: no pool sentences for {', '.join(missing)}")
    for year, number in months:
        if not 1 <= number <= 12:
            raise ArgumentError(f"invalid month {year}-{number}")

    children = np.random.SeedSequence(seed).spawn(len(profiles))
    records: List[TextRecord] = []
    labels: Dict[str, str] = {}
    for profile_idx, (profile, child) in enumerate(zip(profiles, children)):
        rng = np.random.Generator(np.random.PCG64(child))
        counter = 0
        for month in months:
            mixture = profile.mixture_for(month[1])
            codes = sorted(code for code, weight in mixture.items() if weight > 0)
            weights = np.asarray([mixture[code] for code in codes], dtype=float)
            volume = profile.monthly_volume
            language_idx = rng.choice(len(codes), size=volume, p=weights / weights.sum())
            sentence_u = rng.random(volume)
            radial_u = rng.random(volume)
            bearings = rng.random(volume) * 2.0 * math.pi
            offsets = rng.random(volume) * _month_seconds(month)
            start = _month_start(month)
            for i in range(volume):
                code = codes[int(language_idx[i])]
                pool = sentence_pool[code]
                text = pool[min(len(pool) - 1, int(sentence_u[i] * len(pool)))]
                location = destination_point(
                    profile.anchor, float(bearings[i]), JITTER_RADIUS_KM * math.sqrt(float(radial_u[i]))
                )
                record_id = f"syn-{profile_idx:02d}-{counter:07d}"
                counter += 1
                records.append(
                    TextRecord(
                        id=record_id,
                        text=text,
                        timestamp=start + dt.timedelta(seconds=float(offsets[i])),
                        lat=round(location.lat, 7),
                        lon=round(location.lon, 7),
                        geohash=None,
                    )
                )
                labels[record_id] = code
        LOGGER.info("generated %d records for %s", counter, profile.region)
    return SyntheticCorpus(records=tuple(records), labels=labels)


def with_geohashes(records: Sequence[TextRecord], precision: int = 15) -> List[TextRecord]:
    return [
        TextRecord(
            id=record.id,
            text=record.text,
            timestamp=record.timestamp,
            lat=record.lat,
            lon=record.lon,
            geohash=geohash_encode(GeoPoint(record.lat, record.lon), precision)  # type: ignore[arg-type]
            if record.has_coordinates
            else record.geohash,
        )
        for record in records
    ]
