"""Oscillation detection: four pattern heuristics applied recursively.

Each pass projects the trace to zones, builds communities, classifies
stability, then applies the zone-level checks (round-trip jumps, far
jumps) and the community-level checks (triangle jumps, alternating
chains) against that one snapshot. Flagged pings are removed together at
the end of the pass; passes repeat until one removes nothing.

Sightings inside a stable community are never removal candidates: the
zone-level heuristics only flag pings in non-stable zones, and the
community-level ones skip communities whose zones are all stable.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

from .communities import (
    Community,
    CommunitySequence,
    ZonedPing,
    build_communities,
    classify_sequence,
    community_kinematics,
    project_trace,
    stable_zone_set,
)
from .config import DetectionConfig
from .geo import decode_geohash, great_circle_distance
from .trace import Ping, Trace

H1A = "H1a"
H1B = "H1b"
H2A = "H2a"
H2B = "H2b"
ALL_HEURISTICS = (H1A, H1B, H2A, H2B)


@dataclass(frozen=True)
class LabeledRemoval:
    """One removed ping, annotated with the heuristic that first flagged
    it and the pass in which it was removed."""

    ping: Ping
    heuristic: str
    pass_no: int


@dataclass
class DetectionResult:
    cleaned: Trace
    removals: list[LabeledRemoval]
    passes_run: int
    converged: bool


@lru_cache(maxsize=65536)
def _zone_center(zone: str) -> tuple[float, float]:
    c = decode_geohash(zone).center
    return c.lat, c.lon


def _zone_center_distance(z1: str, z2: str) -> float:
    a = _zone_center(z1)
    b = _zone_center(z2)
    return great_circle_distance(a[0], a[1], b[0], b[1])


# ---------------------------------------------------------------------------
# Zone-level heuristics


def _h1a_indices(zoned: list[ZonedPing], stable_zones: set[str],
                 cfg: DetectionConfig) -> set[int]:
    """Round-trip jumps: a device cannot leave a stable zone and be back
    in it within t_min; sightings in between that sit in a different,
    non-stable zone are oscillations."""
    n = len(zoned)
    ts = [zp.ping.t for zp in zoned]
    zs = [zp.zone for zp in zoned]
    # first later index whose zone differs; lets dense dwells skip in O(1)
    next_diff = [n] * n
    for i in range(n - 2, -1, -1):
        next_diff[i] = i + 1 if zs[i + 1] != zs[i] else next_diff[i + 1]

    flagged: set[int] = set()
    for i in range(n - 2):
        zi = zs[i]
        if zi not in stable_zones:
            continue
        nd = next_diff[i]
        if nd >= n or ts[nd] - ts[i] > cfg.t_min:
            continue
        j = nd + 1
        while j < n and ts[j] - ts[i] <= cfg.t_min:
            if zs[j] == zi:
                for k in range(i + 1, j):
                    if zs[k] != zi and zs[k] not in stable_zones:
                        flagged.add(k)
            j += 1
    return flagged


def _zone_runs(zs: list[str]) -> list[tuple[str, int, int]]:
    """Maximal runs of equal consecutive zones as (zone, start, end)."""
    runs = []
    start = 0
    for i in range(1, len(zs)):
        if zs[i] != zs[start]:
            runs.append((zs[start], start, i - 1))
            start = i
    if zs:
        runs.append((zs[start], start, len(zs) - 1))
    return runs


def _h1b_indices(zoned: list[ZonedPing], stable_zones: set[str],
                 cfg: DetectionConfig) -> set[int]:
    """Far jumps: a stable zone next to an unstable one, more than dist_g
    apart yet reached in under t_g, marks the whole unstable run."""
    zs = [zp.zone for zp in zoned]
    ts = [zp.ping.t for zp in zoned]
    runs = _zone_runs(zs)
    flagged: set[int] = set()
    for (z1, s1, e1), (z2, s2, e2) in zip(runs, runs[1:]):
        st1 = z1 in stable_zones
        st2 = z2 in stable_zones
        if st1 == st2:
            continue
        if ts[s2] - ts[e1] >= cfg.t_g:      # strict: "less than t_g"
            continue
        if _zone_center_distance(z1, z2) <= cfg.dist_g:  # strict: "more than"
            continue
        lo, hi = (s2, e2) if st1 else (s1, e1)
        flagged.update(range(lo, hi + 1))
    return flagged


# ---------------------------------------------------------------------------
# Community-level heuristics


def heuristic_2a_condition(prev: Community, mid: Community, nxt: Community,
                           cfg: DetectionConfig) -> bool:
    """Triangle test on three consecutive communities: both legs fast
    (product of speeds above v_pair squared) and the endpoints close
    (under tri_ratio of the shorter leg). Strict inequalities."""
    k1 = community_kinematics(prev, mid, cfg.t_floor)
    k2 = community_kinematics(mid, nxt, cfg.t_floor)
    if not k1.speed * k2.speed > cfg.v_pair * cfg.v_pair:
        return False
    d13 = great_circle_distance(prev.centroid_lat, prev.centroid_lon,
                                nxt.centroid_lat, nxt.centroid_lon)
    return d13 < cfg.tri_ratio * min(k1.distance, k2.distance)


def _triple_conditions(seq: CommunitySequence, cfg: DetectionConfig) -> list[bool]:
    comms = seq.communities
    return [heuristic_2a_condition(comms[i], comms[i + 1], comms[i + 2], cfg)
            for i in range(len(comms) - 2)]


def _chains_and_isolated(conds: list[bool]) -> tuple[list[tuple[int, int]], list[int]]:
    """Partition satisfied triples into chains (>= 2 consecutive, taken by
    the alternating-chain heuristic) and isolated ones (triangle jumps).
    Spans are (first_triple, last_triple), inclusive."""
    chains = []
    isolated = []
    i = 0
    n = len(conds)
    while i < n:
        if not conds[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and conds[j + 1]:
            j += 1
        if j > i:
            chains.append((i, j))
        else:
            isolated.append(i)
        i = j + 1
    return chains, isolated


def _mean_duration(comms: list[Community]) -> float:
    return sum(c.duration for c in comms) / len(comms)


def _h2b_communities(seq: CommunitySequence, cfg: DetectionConfig,
                     conds: list[bool], stable_zones: set[str]
                     ) -> list[Community]:
    """Alternating chains: within each maximal chain, position-number the
    communities and drop the odd/even group with the strictly smaller
    mean dwell (on a tie the group of the chain's first community wins).
    """
    targets = []
    chains, _ = _chains_and_isolated(conds)
    for first, last in chains:
        comms = seq.communities[first:last + 3]
        odd = comms[0::2]    # positions 1, 3, 5, ...
        even = comms[1::2]   # positions 2, 4, 6, ...
        losing = odd if _mean_duration(odd) < _mean_duration(even) else even
        for c in losing:
            if not c.zones <= stable_zones:
                targets.append(c)
    return targets


def _h2a_communities(seq: CommunitySequence, cfg: DetectionConfig,
                     conds: list[bool], stable_zones: set[str]
                     ) -> list[Community]:
    """Triangle jumps: the middle community of an isolated satisfied
    triple, unless all its zones are stable."""
    targets = []
    _, isolated = _chains_and_isolated(conds)
    for i in isolated:
        mid = seq.communities[i + 1]
        if not mid.zones <= stable_zones:
            targets.append(mid)
    return targets


# ---------------------------------------------------------------------------
# Public per-heuristic surfaces (operate on a classified sequence)


def heuristic_1a(seq: CommunitySequence, stable_zones: set[str],
                 cfg: DetectionConfig) -> list[Ping]:
    zoned = seq.zoned_pings()
    return [zoned[i].ping for i in sorted(_h1a_indices(zoned, stable_zones, cfg))]


def heuristic_1b(seq: CommunitySequence, stable_zones: set[str],
                 cfg: DetectionConfig) -> list[Ping]:
    zoned = seq.zoned_pings()
    return [zoned[i].ping for i in sorted(_h1b_indices(zoned, stable_zones, cfg))]


def heuristic_2a(seq: CommunitySequence, cfg: DetectionConfig) -> list[Ping]:
    stable_zones = stable_zone_set(seq)
    conds = _triple_conditions(seq, cfg)
    return [zp.ping for c in _h2a_communities(seq, cfg, conds, stable_zones)
            for zp in c.members]


def heuristic_2b(seq: CommunitySequence, cfg: DetectionConfig) -> list[Ping]:
    stable_zones = stable_zone_set(seq)
    conds = _triple_conditions(seq, cfg)
    return [zp.ping for c in _h2b_communities(seq, cfg, conds, stable_zones)
            for zp in c.members]


# ---------------------------------------------------------------------------
# Pass driver


def run_pass(trace: Trace, cfg: DetectionConfig, pass_no: int = 1
             ) -> list[LabeledRemoval]:
    """One detection pass over a fixed snapshot.

    All four heuristics see the same communities; flags accumulate with
    first-flagger attribution (order: H1a, H1b, H2b, H2a — the chain
    check claims its triples before the triangle check sees them) and the
    union is removed at the end of the pass.
    """
    zoned = project_trace(trace, cfg.precision)
    if not zoned:
        return []
    seq = build_communities(zoned, cfg.dist_c, trace.device_id)
    classify_sequence(seq, cfg.freq_min, cfg.dwell_min)
    stable_zones = stable_zone_set(seq)

    flags: dict[int, str] = {}

    def add(indices, label):
        for i in indices:
            if i not in flags:
                flags[i] = label

    add(sorted(_h1a_indices(zoned, stable_zones, cfg)), H1A)
    add(sorted(_h1b_indices(zoned, stable_zones, cfg)), H1B)

    if len(seq.communities) >= 3:
        conds = _triple_conditions(seq, cfg)
        offset_of: dict[int, int] = {}
        pos = 0
        for c in seq.communities:
            offset_of[id(c)] = pos
            pos += c.frequency

        def member_indices(comms):
            out = []
            for c in comms:
                off = offset_of[id(c)]
                out.extend(range(off, off + c.frequency))
            return sorted(out)

        add(member_indices(_h2b_communities(seq, cfg, conds, stable_zones)), H2B)
        add(member_indices(_h2a_communities(seq, cfg, conds, stable_zones)), H2A)

    return [LabeledRemoval(zoned[i].ping, flags[i], pass_no)
            for i in sorted(flags)]


def detect(trace: Trace, cfg: DetectionConfig | None = None) -> DetectionResult:
    """Apply passes until a pass removes nothing (converged) or the pass
    budget runs out. Rebuilds the community snapshot every pass, so
    removals can expose deeper oscillations for the next pass.
    """
    cfg = cfg or DetectionConfig()
    if not trace.pings:
        return DetectionResult(trace, [], 0, True)
    if len({p.seq for p in trace.pings}) != len(trace.pings):
        raise ValueError("trace pings must carry unique seq values")

    removals: list[LabeledRemoval] = []
    current = trace
    passes = 0
    for pass_no in range(1, cfg.max_passes + 1):
        passes = pass_no
        batch = run_pass(current, cfg, pass_no)
        if not batch:
            return DetectionResult(current, removals, passes, True)
        removals.extend(batch)
        gone = {r.ping.seq for r in batch}
        current = Trace(current.device_id,
                        [p for p in current.pings if p.seq not in gone])
    return DetectionResult(current, removals, passes, False)
