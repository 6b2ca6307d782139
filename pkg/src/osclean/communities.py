"""Dynamic communities over a zone-projected trace.

A community is a maximal run of temporally consecutive sightings whose
successive gaps stay within dist_c. A community with enough sightings or
a long enough dwell is stable; zones touched by stable communities are
this device's stable zones, and stable pings are never removal
candidates within a pass.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .geo import consecutive_distances, encode_geohash_many, great_circle_distance
from .trace import Ping, Trace


class ZonedPing(NamedTuple):
    ping: Ping
    zone: str


@dataclass
class Community:
    """A contiguous group of close-by sightings of one device."""

    members: list[ZonedPing]
    stable: bool = False
    zones: frozenset[str] = field(init=False)
    centroid_lat: float = field(init=False)
    centroid_lon: float = field(init=False)

    def __post_init__(self):
        if not self.members:
            raise ValueError("community must have at least one member")
        self.zones = frozenset(zp.zone for zp in self.members)
        self.centroid_lat = sum(zp.ping.lat for zp in self.members) / len(self.members)
        self.centroid_lon = sum(zp.ping.lon for zp in self.members) / len(self.members)

    @property
    def frequency(self) -> int:
        return len(self.members)

    @property
    def first_t(self) -> float:
        return self.members[0].ping.t

    @property
    def last_t(self) -> float:
        return self.members[-1].ping.t

    @property
    def duration(self) -> float:
        return self.last_t - self.first_t


@dataclass
class CommunitySequence:
    """All communities of one device, in trace order; their concatenated
    members reproduce the zoned trace exactly."""

    device_id: str
    communities: list[Community]

    def zoned_pings(self) -> list[ZonedPing]:
        return [zp for c in self.communities for zp in c.members]


class Kinematics(NamedTuple):
    distance: float  # meters, centroid to centroid
    dt: float        # seconds, boundary ping to boundary ping (clamped)
    speed: float     # m/s


def project_trace(trace: Trace, precision: int = 7) -> list[ZonedPing]:
    """Attach the geohash zone at the given precision to every ping."""
    if not trace.pings:
        return []
    lats = np.fromiter((p.lat for p in trace.pings), dtype=np.float64,
                       count=len(trace.pings))
    lons = np.fromiter((p.lon for p in trace.pings), dtype=np.float64,
                       count=len(trace.pings))
    zones = encode_geohash_many(lats, lons, precision)
    return [ZonedPing(p, z) for p, z in zip(trace.pings, zones)]


def build_communities(zoned: list[ZonedPing], dist_c: float,
                      device_id: str = "") -> CommunitySequence:
    """Greedy left-to-right growth: each sighting joins the current
    community while its gap from the previous sighting stays <= dist_c,
    otherwise it starts a new one."""
    if not zoned:
        return CommunitySequence(device_id, [])
    device_id = device_id or zoned[0].ping.device_id
    n = len(zoned)
    lats = np.fromiter((zp.ping.lat for zp in zoned), dtype=np.float64, count=n)
    lons = np.fromiter((zp.ping.lon for zp in zoned), dtype=np.float64, count=n)
    gaps = consecutive_distances(lats, lons)

    communities: list[Community] = []
    start = 0
    for i in range(n - 1):
        if gaps[i] > dist_c:
            communities.append(Community(zoned[start:i + 1]))
            start = i + 1
    communities.append(Community(zoned[start:]))
    return CommunitySequence(device_id, communities)


def classify_stability(c: Community, freq_min: int, dwell_min: float) -> bool:
    """Stable when the device shows enough occurrences or dwells long
    enough: frequency >= freq_min OR duration >= dwell_min."""
    return c.frequency >= freq_min or c.duration >= dwell_min


def classify_sequence(seq: CommunitySequence, freq_min: int,
                      dwell_min: float) -> None:
    for c in seq.communities:
        c.stable = classify_stability(c, freq_min, dwell_min)


def stable_zone_set(seq: CommunitySequence) -> set[str]:
    """Union of zones over this device's stable communities."""
    zones: set[str] = set()
    for c in seq.communities:
        if c.stable:
            zones.update(c.zones)
    return zones


def community_kinematics(a: Community, b: Community,
                         t_floor: float = 1.0) -> Kinematics:
    """Distance (centroid to centroid), elapsed time (last ping of a to
    first ping of b, clamped below at t_floor), and the implied speed."""
    dt_raw = b.first_t - a.last_t
    if dt_raw < 0:
        raise ValueError(f"community b starts before a ends "
                         f"({b.first_t} < {a.last_t}); a must precede b")
    distance = great_circle_distance(a.centroid_lat, a.centroid_lon,
                                     b.centroid_lat, b.centroid_lon)
    dt = dt_raw if dt_raw >= t_floor else t_floor
    return Kinematics(distance, dt, distance / dt)
