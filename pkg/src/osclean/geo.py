"""Geodetic primitives: geohash codec and great-circle math.

Implemented from first principles (no geo dependencies) so results are
bit-identical across platforms. Geohash cells are half-open, [min, max)
on both axes, so every point maps to exactly one cell at a given
precision.
"""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

BASE32 = "0123456789bcdefghjkmnpqrstuvwxyz"
_CHAR_INDEX = {c: i for i, c in enumerate(BASE32)}
_BYTE32 = np.frombuffer(BASE32.encode("ascii"), dtype=np.uint8)

# Mean Earth radius; all distances are haversine on this sphere.
EARTH_RADIUS_M = 6_371_008.8

MAX_PRECISION = 12


class CoordinateError(ValueError):
    """Latitude/longitude outside the valid domain."""


class GeohashError(ValueError):
    """Malformed geohash code."""


class LatLon(NamedTuple):
    lat: float
    lon: float


class CellBox(NamedTuple):
    """Bounds of one geohash cell, half-open on both axes."""

    lat_min: float
    lat_max: float
    lon_min: float
    lon_max: float

    @property
    def center(self) -> LatLon:
        return LatLon((self.lat_min + self.lat_max) / 2.0,
                      (self.lon_min + self.lon_max) / 2.0)

    def contains(self, lat: float, lon: float) -> bool:
        return (self.lat_min <= lat < self.lat_max
                and self.lon_min <= lon < self.lon_max)


def normalize_lon(lon: float) -> float:
    """Map a longitude in [-180, 180] onto the canonical [-180, 180)."""
    return -180.0 if lon == 180.0 else lon


def validate_latlon(lat: float, lon: float) -> None:
    if not (math.isfinite(lat) and -90.0 <= lat <= 90.0):
        raise CoordinateError(f"latitude {lat!r} outside [-90, 90]")
    if not (math.isfinite(lon) and -180.0 <= lon <= 180.0):
        raise CoordinateError(f"longitude {lon!r} outside [-180, 180]")


def encode_geohash(lat: float, lon: float, precision: int = 7) -> str:
    """Encode a point as a base32 geohash of the given character count.

    Standard interleaved bisection, longitude first. The upper branch is
    taken when the coordinate equals the midpoint (half-open cells).
    """
    if not 1 <= precision <= MAX_PRECISION:
        raise GeohashError(f"precision {precision} outside [1, {MAX_PRECISION}]")
    validate_latlon(lat, lon)
    lon = normalize_lon(lon)

    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    chars = []
    ch = 0
    bit = 0
    even = True
    while len(chars) < precision:
        if even:
            mid = (lon_lo + lon_hi) / 2.0
            if lon >= mid:
                ch |= 16 >> bit
                lon_lo = mid
            else:
                lon_hi = mid
        else:
            mid = (lat_lo + lat_hi) / 2.0
            if lat >= mid:
                ch |= 16 >> bit
                lat_lo = mid
            else:
                lat_hi = mid
        even = not even
        if bit < 4:
            bit += 1
        else:
            chars.append(BASE32[ch])
            ch = 0
            bit = 0
    return "".join(chars)


def encode_geohash_many(lats, lons, precision: int = 7) -> list[str]:
    """Vectorized encode_geohash; bit-identical to the scalar version."""
    if not 1 <= precision <= MAX_PRECISION:
        raise GeohashError(f"precision {precision} outside [1, {MAX_PRECISION}]")
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    if lats.shape != lons.shape or lats.ndim != 1:
        raise ValueError("lats and lons must be 1-D arrays of equal length")
    n = lats.size
    if n == 0:
        return []
    if (np.abs(lats) > 90.0).any() or (np.abs(lons) > 180.0).any() \
            or not np.isfinite(lats).all() or not np.isfinite(lons).all():
        raise CoordinateError("coordinate outside valid domain")
    lons = np.where(lons == 180.0, -180.0, lons)

    nbits = 5 * precision
    lat_lo = np.full(n, -90.0)
    lat_hi = np.full(n, 90.0)
    lon_lo = np.full(n, -180.0)
    lon_hi = np.full(n, 180.0)
    code = np.zeros(n, dtype=np.uint64)
    even = True
    for _ in range(nbits):
        if even:
            mid = (lon_lo + lon_hi) / 2.0
            take = lons >= mid
            lon_lo = np.where(take, mid, lon_lo)
            lon_hi = np.where(take, lon_hi, mid)
        else:
            mid = (lat_lo + lat_hi) / 2.0
            take = lats >= mid
            lat_lo = np.where(take, mid, lat_lo)
            lat_hi = np.where(take, lat_hi, mid)
        code = (code << np.uint64(1)) | take.astype(np.uint64)
        even = not even

    chars = np.empty((n, precision), dtype=np.uint8)
    for i in range(precision):
        shift = np.uint64(5 * (precision - 1 - i))
        chars[:, i] = _BYTE32[((code >> shift) & np.uint64(31)).astype(np.intp)]
    flat = chars.reshape(n * precision).tobytes().decode("ascii")
    return [flat[i * precision:(i + 1) * precision] for i in range(n)]


def decode_geohash(code: str) -> CellBox:
    """Exact inverse of encode_geohash: the half-open cell bounds."""
    if not code or len(code) > MAX_PRECISION:
        raise GeohashError(f"geohash length must be in [1, {MAX_PRECISION}]: {code!r}")
    lat_lo, lat_hi = -90.0, 90.0
    lon_lo, lon_hi = -180.0, 180.0
    even = True
    for c in code:
        try:
            d = _CHAR_INDEX[c]
        except KeyError:
            raise GeohashError(f"character {c!r} not in geohash alphabet") from None
        for mask in (16, 8, 4, 2, 1):
            if even:
                mid = (lon_lo + lon_hi) / 2.0
                if d & mask:
                    lon_lo = mid
                else:
                    lon_hi = mid
            else:
                mid = (lat_lo + lat_hi) / 2.0
                if d & mask:
                    lat_lo = mid
                else:
                    lat_hi = mid
            even = not even
    return CellBox(lat_lo, lat_hi, lon_lo, lon_hi)


def great_circle_distance(lat1: float, lon1: float,
                          lat2: float, lon2: float) -> float:
    """Haversine distance in meters on the mean-radius sphere."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = math.radians(lat2 - lat1)
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2.0) ** 2 \
        + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2.0) ** 2
    if a > 1.0:  # rounding guard near antipodes
        a = 1.0
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def consecutive_distances(lats, lons) -> np.ndarray:
    """Haversine distance between each adjacent pair of points, in meters.

    Returns an array of length n-1 (empty for n < 2).
    """
    lats = np.asarray(lats, dtype=np.float64)
    lons = np.asarray(lons, dtype=np.float64)
    if lats.size < 2:
        return np.empty(0)
    phi = np.radians(lats)
    dphi = np.radians(np.diff(lats))
    dlam = np.radians(np.diff(lons))
    a = np.sin(dphi / 2.0) ** 2 \
        + np.cos(phi[:-1]) * np.cos(phi[1:]) * np.sin(dlam / 2.0) ** 2
    np.clip(a, 0.0, 1.0, out=a)
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(a))


def segment_speed(a, b, t_floor: float = 1.0) -> float:
    """Speed in m/s between two sightings (objects with .t, .lat, .lon).

    Timestamps may coincide: gaps below t_floor are clamped to t_floor so
    the speed stays finite. Decreasing timestamps are a caller bug.
    """
    dt = b.t - a.t
    if dt < 0:
        raise ValueError(f"timestamps decrease: {a.t} -> {b.t} (canonicalize first)")
    if dt < t_floor:
        dt = t_floor
    return great_circle_distance(a.lat, a.lon, b.lat, b.lon) / dt
