"""Shared builders for detector test fixtures."""

import math

from osclean.communities import Community, ZonedPing
from osclean.config import DetectionConfig
from osclean.geo import encode_geohash
from osclean.trace import Ping, Trace

# base location for fixtures (suburban US east coast)
BASE_LAT = 38.99
BASE_LON = -76.94

_DEG_M = 111195.08023353292  # meters per degree of latitude on the sphere


def offset(lat, lon, east_m=0.0, north_m=0.0):
    """Point east_m/north_m meters from (lat, lon); good to ~0.1% at
    fixture scales, and fixtures always verify real distances."""
    new_lat = lat + north_m / _DEG_M
    new_lon = lon + east_m / (_DEG_M * math.cos(math.radians(lat)))
    return new_lat, new_lon


class TraceBuilder:
    """Accumulate pings with auto-assigned unique seq numbers."""

    def __init__(self, device_id="dev", lat=BASE_LAT, lon=BASE_LON):
        self.device_id = device_id
        self.base_lat = lat
        self.base_lon = lon
        self.pings = []

    def at(self, t, east_m=0.0, north_m=0.0):
        lat, lon = offset(self.base_lat, self.base_lon, east_m, north_m)
        self.pings.append(Ping(self.device_id, float(t), lat, lon,
                               seq=len(self.pings) + 1))
        return self

    def dwell(self, t_start, count, gap_s, east_m=0.0, north_m=0.0):
        for k in range(count):
            self.at(t_start + k * gap_s, east_m, north_m)
        return self

    def build(self) -> Trace:
        return Trace(self.device_id, list(self.pings))


# ---------------------------------------------------------------------------
# The four exemplified jump shapes. Each returns (trace, expected removal
# seq set); geometry chosen so exactly one heuristic fires.


def round_trip_shape(return_gap_s=10.0, jump_m=900.0, device="dev"):
    """Quick out-and-back from a frequented zone; the jump is seq 4."""
    b = TraceBuilder(device)
    b.dwell(0, 3, 5)
    b.at(10 + return_gap_s / 2, east_m=jump_m)
    b.dwell(10 + return_gap_s, 5, 5)
    return b.build(), {4}


def far_jump_shape(jump_m=9656.0, gap_s=120.0, device="dev"):
    """Lone sighting miles out, minutes after a solid dwell; seq 8."""
    b = TraceBuilder(device)
    b.at(-60, east_m=-1000.0)
    b.dwell(0, 6, 10)
    b.at(50 + gap_s, east_m=jump_m)
    return b.build(), {8}


def triangle_shape(leg_gap_s=200.0, jump_m=16093.0, back_east_m=0.0,
                   device="dev"):
    """Dwell, spurious two-ping visit far away, dwell again; seqs 6-7."""
    b = TraceBuilder(device)
    b.dwell(0, 5, 10)
    b.dwell(40 + leg_gap_s, 2, 10, east_m=jump_m)
    b.dwell(60 + 2 * leg_gap_s, 5, 10, east_m=back_east_m)
    return b.build(), {6, 7}


def alternating_chain_shape(n_pairs=4, y_east_m=3000.0, gap_s=40.0,
                            x_dwell_s=400.0, y_dwell_s=20.0, device="dev"):
    """Long dwells at X alternating with short bursts at Y; every Y ping
    (two per pair) is expected removed."""
    b = TraceBuilder(device)
    t = 0.0
    expected = set()
    for _ in range(n_pairs):
        b.at(t).at(t + x_dwell_s / 2).at(t + x_dwell_s)
        t += x_dwell_s + gap_s
        b.at(t, east_m=y_east_m)
        expected.add(len(b.pings))
        b.at(t + y_dwell_s, east_m=y_east_m)
        expected.add(len(b.pings))
        t += y_dwell_s + gap_s
    return b.build(), expected


# ---------------------------------------------------------------------------
# Random inputs for property tests


def random_walk_trace(rng, device="d", n_max=30):
    """A mix of local drift, neighborhood hops, and wild jumps; exercises
    every heuristic's firing region over enough samples."""
    b = TraceBuilder(device)
    t = 0.0
    x = 0.0
    for _ in range(rng.randint(1, n_max)):
        move = rng.random()
        if move < 0.5:
            x += rng.uniform(0, 120)
            t += rng.uniform(1, 30)
        elif move < 0.8:
            x += rng.uniform(900, 4000)
            t += rng.uniform(10, 400)
        else:
            x += rng.choice([-1, 1]) * rng.uniform(5000, 30000)
            t += rng.uniform(1, 240)
        b.at(t, east_m=x)
    return b.build()


def random_community_sequence(rng, cfg=None, max_len=12):
    """Communities with leg speeds biased toward the paired-speed bound,
    for oracle cross-checks of the triangle condition."""
    cfg = cfg or DetectionConfig()
    t = rng.uniform(0, 1000)
    comms = []
    x = rng.uniform(-20000, 20000)
    for i in range(rng.randint(3, max_len)):
        if rng.random() < 0.5:
            step = rng.uniform(500, 25000)
        else:
            step = cfg.v_pair * rng.uniform(20, 60) * rng.uniform(0.7, 1.3)
        x += rng.choice([-1, 1]) * step
        members = []
        for k in range(rng.randint(1, 4)):
            lat, lon = offset(BASE_LAT, BASE_LON, east_m=x + rng.uniform(-150, 150))
            members.append(ZonedPing(Ping("d", t, lat, lon, len(comms) * 10 + k),
                                     encode_geohash(lat, lon, 7)))
            t += rng.uniform(0, 30)
        comms.append(Community(members))
        t += rng.uniform(0, 120)
    return comms


def oracle_triangle_condition(prev, mid, nxt, cfg):
    """Brute-force re-evaluation of the two triangle inequalities from raw
    member data; shares no code with the implementation."""

    def centroid(c):
        lats = [zp.ping.lat for zp in c.members]
        lons = [zp.ping.lon for zp in c.members]
        return sum(lats) / len(lats), sum(lons) / len(lons)

    def hav(p, q):
        ph1, la1 = math.radians(p[0]), math.radians(p[1])
        ph2, la2 = math.radians(q[0]), math.radians(q[1])
        s = (math.sin((ph2 - ph1) / 2) ** 2
             + math.cos(ph1) * math.cos(ph2) * math.sin((la2 - la1) / 2) ** 2)
        return 2 * 6371008.8 * math.asin(math.sqrt(min(1.0, s)))

    c1, c2, c3 = centroid(prev), centroid(mid), centroid(nxt)
    d12, d23, d13 = hav(c1, c2), hav(c2, c3), hav(c1, c3)
    dt12 = max(mid.members[0].ping.t - prev.members[-1].ping.t, cfg.t_floor)
    dt23 = max(nxt.members[0].ping.t - mid.members[-1].ping.t, cfg.t_floor)
    v12 = d12 / dt12
    v23 = d23 / dt23
    return v12 * v23 > cfg.v_pair * cfg.v_pair and d13 < cfg.tri_ratio * min(d12, d23)
