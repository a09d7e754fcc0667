"""Great-circle distance and neighboring/non-neighboring POI classification."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numba import njit

EARTH_RADIUS_KM = 6371.0088


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0 or not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"coordinate out of range: ({self.lat}, {self.lon})")


class NeighborClass(Enum):
    NEIGHBORING = "neighboring"
    NON_NEIGHBORING = "non-neighboring"


@njit(cache=True, nogil=True)
def haversine_km(lat1, lon1, lat2, lon2):
    """Haversine distance in km between two (lat, lon) points given in degrees."""
    p1 = math.radians(lat1)
    p2 = math.radians(lat2)
    dp = p2 - p1
    dl = math.radians(lon2 - lon1)
    a = math.sin(dp * 0.5) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dl * 0.5) ** 2
    # clamp: rounding can push a a hair above 1 for antipodal points
    a = min(1.0, max(0.0, a))
    return 2.0 * EARTH_RADIUS_KM * math.asin(math.sqrt(a))


def distance_km(a: GeoPoint, b: GeoPoint) -> float:
    return float(haversine_km(a.lat, a.lon, b.lat, b.lon))


def _lookup(coords, poi):
    if isinstance(coords, np.ndarray):
        if not (isinstance(poi, (int, np.integer)) and 0 <= poi < len(coords)):
            raise KeyError(f"no coordinates for POI {poi!r}")
        lat, lon = coords[poi]
    else:
        lat, lon = coords[poi]
    if math.isnan(lat) or math.isnan(lon):
        raise KeyError(f"no coordinates for POI {poi!r}")
    return GeoPoint(float(lat), float(lon))


def classify(target_poi, candidate_poi, s: float, coords) -> NeighborClass:
    """Neighboring iff the candidate lies within ``s`` km (inclusive) of the target.

    ``coords`` maps a POI key to ``(lat, lon)``; either a mapping or an
    ``(n, 2)`` array indexed by dense POI index.
    """
    if not s > 0:
        raise ValueError("distance threshold must be positive")
    d = distance_km(_lookup(coords, target_poi), _lookup(coords, candidate_poi))
    return NeighborClass.NEIGHBORING if d <= s else NeighborClass.NON_NEIGHBORING
