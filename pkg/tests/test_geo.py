"""Geodetic core: known vectors, independent-oracle cross-checks, properties."""

import math
import random

import pytest

from osclean.geo import (
    EARTH_RADIUS_M,
    CellBox,
    CoordinateError,
    GeohashError,
    consecutive_distances,
    decode_geohash,
    encode_geohash,
    encode_geohash_many,
    great_circle_distance,
    segment_speed,
)

# ---------------------------------------------------------------------------
# Independent reference codec (oracle). Deliberately implemented via bit
# strings rather than interval bisection so it shares no code path with the
# implementation under test.

_B32 = "0123456789bcdefghjkmnpqrstuvwxyz"


def _oracle_encode(lat, lon, precision):
    if lon == 180.0:
        lon = -180.0
    bits = []
    lo_lat, hi_lat = -90.0, 90.0
    lo_lon, hi_lon = -180.0, 180.0
    for i in range(5 * precision):
        if i % 2 == 0:  # longitude bit
            mid = (lo_lon + hi_lon) / 2
            if lon >= mid:
                bits.append("1")
                lo_lon = mid
            else:
                bits.append("0")
                hi_lon = mid
        else:
            mid = (lo_lat + hi_lat) / 2
            if lat >= mid:
                bits.append("1")
                lo_lat = mid
            else:
                bits.append("0")
                hi_lat = mid
    s = "".join(bits)
    return "".join(_B32[int(s[k:k + 5], 2)] for k in range(0, len(s), 5))


def _oracle_decode(code):
    bits = "".join(format(_B32.index(c), "05b") for c in code)
    lo_lat, hi_lat = -90.0, 90.0
    lo_lon, hi_lon = -180.0, 180.0
    for i, b in enumerate(bits):
        if i % 2 == 0:
            mid = (lo_lon + hi_lon) / 2
            if b == "1":
                lo_lon = mid
            else:
                hi_lon = mid
        else:
            mid = (lo_lat + hi_lat) / 2
            if b == "1":
                lo_lat = mid
            else:
                hi_lat = mid
    return lo_lat, hi_lat, lo_lon, hi_lon


class _Pt:
    def __init__(self, t, lat, lon):
        self.t = t
        self.lat = lat
        self.lon = lon


# ---------------------------------------------------------------------------
# Geohash encode/decode


def test_encode_known_vector_wikipedia():
    # Canonical reference point; also hand-checked: the first 35 bits of the
    # lon/lat interleave for (57.64911, 10.40744) spell u4pruyd.
    assert encode_geohash(57.64911, 10.40744, 7) == "u4pruyd"
    assert encode_geohash(57.64911, 10.40744, 11) == "u4pruydqqvj"


def test_encode_origin_precision_1():
    # lat and lon both take the upper-half branch on every one of the
    # first 5 bits: 11000 -> index 24 -> 's'.
    assert encode_geohash(0.0, 0.0, 1) == "s"


def test_decode_s_cell_bounds():
    box = decode_geohash("s")
    assert box == CellBox(0.0, 45.0, 0.0, 45.0)
    lo_lat, hi_lat, lo_lon, hi_lon = _oracle_decode("s")
    assert (lo_lat, hi_lat, lo_lon, hi_lon) == (0.0, 45.0, 0.0, 45.0)


def test_decode_contains_known_point():
    box = decode_geohash("u4pruyd")
    assert box.contains(57.64911, 10.40744)


def test_encode_matches_oracle_random():
    rng = random.Random(1234)
    for _ in range(2000):
        lat = rng.uniform(-90, 90)
        lon = rng.uniform(-180, 180)
        p = rng.randint(1, 12)
        assert encode_geohash(lat, lon, p) == _oracle_encode(lat, lon, p)


def test_decode_matches_oracle_random():
    rng = random.Random(99)
    for _ in range(500):
        code = "".join(rng.choice(_B32) for _ in range(rng.randint(1, 12)))
        box = decode_geohash(code)
        assert (box.lat_min, box.lat_max, box.lon_min, box.lon_max) == _oracle_decode(code)


def test_roundtrip_containment():
    rng = random.Random(7)
    for _ in range(1000):
        lat = rng.uniform(-90, 90)
        lon = rng.uniform(-180, 180)
        box = decode_geohash(encode_geohash(lat, lon, 7))
        assert box.contains(lat, lon)


def test_center_reencodes_to_same_cell():
    rng = random.Random(8)
    for _ in range(300):
        z = encode_geohash(rng.uniform(-90, 90), rng.uniform(-180, 180), 7)
        c = decode_geohash(z).center
        assert encode_geohash(c.lat, c.lon, 7) == z


def test_interior_points_reencode_to_same_cell():
    # Any point strictly inside the half-open box must map back to the cell,
    # including points squeezed against the bounds.
    rng = random.Random(21)
    for _ in range(300):
        z = encode_geohash(rng.uniform(-90, 90), rng.uniform(-180, 180), 6)
        box = decode_geohash(z)
        for f_lat, f_lon in ((0.0, 0.0), (0.0, 0.999), (0.999, 0.0), (0.5, 0.5)):
            lat = box.lat_min + f_lat * (box.lat_max - box.lat_min)
            lon = box.lon_min + f_lon * (box.lon_max - box.lon_min)
            assert encode_geohash(lat, lon, 6) == z


def test_prefix_refinement():
    rng = random.Random(9)
    for _ in range(300):
        lat = rng.uniform(-90, 90)
        lon = rng.uniform(-180, 180)
        codes = [encode_geohash(lat, lon, p) for p in range(1, 13)]
        for shorter, longer in zip(codes, codes[1:]):
            assert longer.startswith(shorter)


def test_encode_many_matches_scalar():
    rng = random.Random(10)
    lats = [rng.uniform(-90, 90) for _ in range(500)]
    lons = [rng.uniform(-180, 180) for _ in range(500)]
    for p in (1, 5, 7, 12):
        got = encode_geohash_many(lats, lons, p)
        assert got == [encode_geohash(a, b, p) for a, b in zip(lats, lons)]
    assert encode_geohash_many([], [], 7) == []


def test_cell_size_precision7_equator():
    # Cell just north of the equator: 360/2^18 deg of lon, 180/2^17 of lat.
    z = encode_geohash(0.0001, 0.0001, 7)
    box = decode_geohash(z)
    width = great_circle_distance(0.0, box.lon_min, 0.0, box.lon_max)
    height = great_circle_distance(box.lat_min, box.lon_min, box.lat_max, box.lon_min)
    assert 151.9 <= width <= 153.9
    assert 151.9 <= height <= 153.9


def test_encode_errors():
    with pytest.raises(CoordinateError):
        encode_geohash(91.0, 0.0, 7)
    with pytest.raises(CoordinateError):
        encode_geohash(0.0, 181.0, 7)
    with pytest.raises(CoordinateError):
        encode_geohash(float("nan"), 0.0, 7)
    with pytest.raises(GeohashError):
        encode_geohash(0.0, 0.0, 0)
    with pytest.raises(GeohashError):
        encode_geohash(0.0, 0.0, 13)


def test_decode_errors():
    with pytest.raises(GeohashError):
        decode_geohash("abc")  # 'a' not in the alphabet
    with pytest.raises(GeohashError):
        decode_geohash("")


def test_lon_180_normalizes():
    assert encode_geohash(10.0, 180.0, 5) == encode_geohash(10.0, -180.0, 5)


# ---------------------------------------------------------------------------
# Great-circle distance


def test_distance_identity():
    assert great_circle_distance(12.34, 56.78, 12.34, 56.78) == 0.0


def test_distance_one_equatorial_degree():
    # One degree along the equator is exactly 1/360 of the circumference.
    expected = 2.0 * math.pi * EARTH_RADIUS_M / 360.0
    assert abs(great_circle_distance(0, 0, 0, 1) - expected) < 1e-6
    assert abs(expected - 111195.0) < 5.0


def test_distance_antipodal():
    assert abs(great_circle_distance(0, 0, 0, 180) - math.pi * EARTH_RADIUS_M) < 1.0


def test_distance_symmetric_exact():
    rng = random.Random(11)
    for _ in range(1000):
        a = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        b = (rng.uniform(-90, 90), rng.uniform(-180, 180))
        assert great_circle_distance(*a, *b) == great_circle_distance(*b, *a)


def test_distance_triangle_inequality():
    rng = random.Random(12)
    for _ in range(1000):
        pts = [(rng.uniform(-90, 90), rng.uniform(-180, 180)) for _ in range(3)]
        ab = great_circle_distance(*pts[0], *pts[1])
        bc = great_circle_distance(*pts[1], *pts[2])
        ac = great_circle_distance(*pts[0], *pts[2])
        assert ac <= ab + bc + 1e-6 * max(ac, 1.0)


def test_consecutive_distances_matches_scalar():
    rng = random.Random(13)
    lats = [rng.uniform(-60, 60) for _ in range(200)]
    lons = [rng.uniform(-170, 170) for _ in range(200)]
    vec = consecutive_distances(lats, lons)
    assert vec.shape == (199,)
    for i in range(199):
        scalar = great_circle_distance(lats[i], lons[i], lats[i + 1], lons[i + 1])
        assert vec[i] == pytest.approx(scalar, rel=1e-12, abs=1e-9)
    assert consecutive_distances([1.0], [2.0]).size == 0
    assert consecutive_distances([], []).size == 0


# ---------------------------------------------------------------------------
# Segment speed


def test_speed_zero_when_stationary():
    a = _Pt(0.0, 38.99, -76.94)
    b = _Pt(60.0, 38.99, -76.94)
    assert segment_speed(a, b) == 0.0


def test_speed_one_degree_per_hour():
    a = _Pt(0.0, 0.0, 0.0)
    b = _Pt(3600.0, 0.0, 1.0)
    assert segment_speed(a, b) == pytest.approx(30.89, abs=0.01)


def test_speed_clamps_small_dt():
    a = _Pt(100.0, 0.0, 0.0)
    b = _Pt(100.0, 0.0, 0.01)
    d = great_circle_distance(0.0, 0.0, 0.0, 0.01)
    assert segment_speed(a, b, t_floor=1.0) == pytest.approx(d / 1.0)
    assert segment_speed(a, b, t_floor=5.0) == pytest.approx(d / 5.0)


def test_speed_rejects_decreasing_timestamps():
    a = _Pt(10.0, 0.0, 0.0)
    b = _Pt(9.0, 0.0, 0.01)
    with pytest.raises(ValueError):
        segment_speed(a, b)
