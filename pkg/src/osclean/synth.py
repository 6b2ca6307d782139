"""Synthetic labeled scenarios: plausible mobility traces with injected
oscillation shapes, plus scoring and threshold sweeps.

The generator stands in for real labeled data: it plans per-device
schedules of dwells and travels, then injects parameterized instances of
the four jump shapes (round-trip, far, triangle, alternating chain).
Every instance is verified against its heuristic's inequalities on the
actual emitted values before the dataset is accepted, so ground truth is
correct by construction.

Randomness comes from numpy's PCG64 generator; one seed reproduces the
dataset byte for byte. Coordinates are stored at the file's own
resolution (7 decimals, ~1 cm) from the start, so nothing shifts between
generation-time checks and what a detector later parses back.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .config import DetectionConfig
from .detector import DetectionResult, LabeledRemoval, detect
from .geo import decode_geohash, encode_geohash, great_circle_distance, segment_speed
from .trace import Ping, Trace

NAIVE_SPEED = "speed"

_DEG_M = 111195.08023353292  # meters per degree of latitude
# generation-time allowance for jitter when checking distances against
# community centroids (jitter sigma is 15 m by default)
_SLACK_M = 120.0
_WINDOW_MARGIN_S = 120.0
_PLACEMENT_TRIES = 25


class GenerationError(ValueError):
    """A template parameterization cannot satisfy its heuristic's
    inequalities, or a scenario cannot host the requested injections."""


# ---------------------------------------------------------------------------
# Scenario specification


@dataclass(frozen=True)
class Range:
    lo: float
    hi: float

    def __post_init__(self):
        if self.hi < self.lo:
            raise GenerationError(f"range [{self.lo}, {self.hi}] is inverted")

    def sample(self, rng) -> float:
        return float(rng.uniform(self.lo, self.hi))

    def sample_int(self, rng) -> int:
        return int(rng.integers(int(self.lo), int(self.hi) + 1))


def _as_range(value, name) -> Range:
    if isinstance(value, Range):
        return value
    if isinstance(value, (int, float)):
        return Range(float(value), float(value))
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return Range(float(value[0]), float(value[1]))
    raise GenerationError(f"{name}: expected a number or [lo, hi], got {value!r}")


@dataclass
class ScheduleSpec:
    visits: Range = Range(3, 5)
    anchor_count: Range = Range(2, 3)
    anchor_spacing_m: Range = Range(3000, 9000)
    dwell_duration_s: Range = Range(1500, 5400)
    dwell_ping_gap_s: Range = Range(8, 14)
    travel_speed_mps: Range = Range(10, 30)
    travel_ping_gap_s: Range = Range(15, 35)
    jitter_sigma_m: float = 15.0


KINDS = ("round_trip_jump", "far_jump", "triangle_jump", "alternating_chain")

_DEFAULT_PARAMS = {
    "round_trip_jump": {"jump_m": Range(1500, 4000)},
    "far_jump": {"jump_m": Range(9500, 16000)},
    "triangle_jump": {"jump_m": Range(18000, 26000), "lead_s": Range(170, 250),
                      "burst_pings": Range(2, 4), "burst_gap_s": Range(8, 15)},
    "alternating_chain": {"jump_m": Range(3400, 5000), "gap_s": Range(36, 44),
                          "bursts": Range(3, 5), "burst_pings": Range(1, 3),
                          "burst_gap_s": Range(8, 10), "chunk_pings": Range(5, 8),
                          "chunk_gap_s": Range(8, 12)},
}


@dataclass
class InjectionSpec:
    kind: str
    count: int
    params: dict[str, Range] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise GenerationError(f"unknown injection kind {self.kind!r}; "
                                  f"known: {', '.join(KINDS)}")
        merged = dict(_DEFAULT_PARAMS[self.kind])
        for k, v in self.params.items():
            if k not in merged:
                raise GenerationError(f"{self.kind}: unknown parameter {k!r}")
            merged[k] = _as_range(v, f"{self.kind}.{k}")
        self.params = merged


@dataclass
class ScenarioSpec:
    seed: int = 0
    devices: int = 1
    start_time: float = 1_600_000_000.0
    region_lat: float = 38.99
    region_lon: float = -76.94
    region_radius_m: float = 25_000.0
    schedule: ScheduleSpec = field(default_factory=ScheduleSpec)
    injections: list[InjectionSpec] = field(default_factory=list)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioSpec":
        data = dict(data)
        region = data.pop("region", {})
        sched_in = data.pop("schedule", {})
        inj_in = data.pop("injections", [])
        known = {"seed", "devices", "start_time"}
        unknown = set(data) - known
        if unknown:
            raise GenerationError(f"unknown scenario keys: {sorted(unknown)}")
        sched_kwargs = {}
        for name, default in (
                ("visits", None), ("anchor_count", None), ("anchor_spacing_m", None),
                ("dwell_duration_s", None), ("dwell_ping_gap_s", None),
                ("travel_speed_mps", None), ("travel_ping_gap_s", None)):
            if name in sched_in:
                sched_kwargs[name] = _as_range(sched_in.pop(name), name)
        if "jitter_sigma_m" in sched_in:
            sched_kwargs["jitter_sigma_m"] = float(sched_in.pop("jitter_sigma_m"))
        if sched_in:
            raise GenerationError(f"unknown schedule keys: {sorted(sched_in)}")
        injections = []
        for item in inj_in:
            item = dict(item)
            kind = item.pop("kind", None)
            count = int(item.pop("count", 1))
            injections.append(InjectionSpec(kind, count, item))
        return cls(
            seed=int(data.get("seed", 0)),
            devices=int(data.get("devices", 1)),
            start_time=float(data.get("start_time", 1_600_000_000.0)),
            region_lat=float(region.get("lat", 38.99)),
            region_lon=float(region.get("lon", -76.94)),
            region_radius_m=float(region.get("radius_m", 25_000.0)),
            schedule=ScheduleSpec(**sched_kwargs),
            injections=injections,
        )

    @classmethod
    def from_json(cls, path) -> "ScenarioSpec":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as e:
                raise GenerationError(f"{path}: invalid JSON: {e}") from None
        return cls.from_dict(data)


# ---------------------------------------------------------------------------
# Ground truth


@dataclass
class GroundTruth:
    """(device_id, seq) -> injecting template id, or None for normal."""

    labels: dict[tuple[str, int], Optional[str]] = field(default_factory=dict)

    def oscillation_keys(self) -> set[tuple[str, int]]:
        return {k for k, v in self.labels.items() if v is not None}

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("device_id,seq,oscillation,template_id\n")
            for (dev, seq), tid in sorted(self.labels.items()):
                fh.write(f"{dev},{seq},{1 if tid else 0},{tid or ''}\n")

    @classmethod
    def read(cls, path) -> "GroundTruth":
        labels = {}
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline()
            if not header.startswith("device_id,seq"):
                raise GenerationError(f"{path}: not a truth file")
            for line in fh:
                dev, seq, osc, tid = line.rstrip("\n").split(",", 3)
                labels[(dev, int(seq))] = (tid or None) if osc == "1" else None
        return cls(labels)


@dataclass
class TemplateInstance:
    template_id: str
    kind: str
    device_id: str
    params: dict[str, float]


@dataclass
class SyntheticDataset:
    traces: list[Trace]
    truth: GroundTruth
    templates: list[TemplateInstance]


# ---------------------------------------------------------------------------
# Geometry helpers


def _offset_point(lat: float, lon: float, bearing_rad: float,
                  dist_m: float) -> tuple[float, float]:
    north = math.cos(bearing_rad) * dist_m
    east = math.sin(bearing_rad) * dist_m
    return (lat + north / _DEG_M,
            lon + east / (_DEG_M * math.cos(math.radians(lat))))


def _store(x: float, decimals: int) -> float:
    """Snap to the value the output file will carry, so generation-time
    checks see exactly what a parser reads back."""
    return float(f"{x:.{decimals}f}")


@dataclass
class _Row:
    t: float
    lat: float
    lon: float
    instance: Optional[str] = None  # template id
    role: Optional[str] = None      # "osc" (labeled) or "aux" (normal helper)


@dataclass
class _Dwell:
    t0: float
    t1: float
    anchor: int
    gap: float
    claims: list[tuple[float, float]] = field(default_factory=list)  # spacing
    skips: list[tuple[float, float]] = field(default_factory=list)   # no base pings

    def grid(self) -> list[float]:
        n = int((self.t1 - self.t0) / self.gap)
        return [self.t0 + k * self.gap for k in range(n + 1)]


@dataclass
class _Travel:
    t0: float
    t1: float
    src: int
    dst: int
    gap: float
    claimed: bool = False

    def grid(self) -> list[float]:
        out = []
        t = self.t0 + self.gap
        while t < self.t1:
            out.append(t)
            t += self.gap
        return out


@dataclass
class _DevicePlan:
    device_id: str
    anchors: list[tuple[float, float]]
    segments: list[Union[_Dwell, _Travel]]
    jitter: float
    pending: list = field(default_factory=list)  # apply-steps for injections


def _plan_device(spec: ScenarioSpec, rng, device_id: str) -> _DevicePlan:
    sched = spec.schedule
    n_anchor = sched.anchor_count.sample_int(rng)
    anchors = []
    r = spec.region_radius_m * math.sqrt(float(rng.uniform(0, 1)))
    theta = float(rng.uniform(0, 2 * math.pi))
    anchors.append(_offset_point(spec.region_lat, spec.region_lon, theta, r))
    while len(anchors) < n_anchor:
        bearing = float(rng.uniform(0, 2 * math.pi))
        spacing = sched.anchor_spacing_m.sample(rng)
        anchors.append(_offset_point(*anchors[-1], bearing, spacing))

    segments: list[Union[_Dwell, _Travel]] = []
    t = spec.start_time + float(rng.uniform(0, 600))
    at = 0
    visits = max(1, sched.visits.sample_int(rng))
    for v in range(visits):
        dur = sched.dwell_duration_s.sample(rng)
        gap = sched.dwell_ping_gap_s.sample(rng)
        segments.append(_Dwell(t, t + dur, at, gap))
        t += dur
        if v == visits - 1 or n_anchor == 1:
            continue
        nxt_choices = [i for i in range(n_anchor) if i != at]
        nxt = nxt_choices[int(rng.integers(0, len(nxt_choices)))]
        dist = great_circle_distance(*anchors[at], *anchors[nxt])
        speed = sched.travel_speed_mps.sample(rng)
        tgap = sched.travel_ping_gap_s.sample(rng)
        dur = max(dist / speed, tgap)
        segments.append(_Travel(t, t + dur, at, nxt, tgap))
        t += dur
        at = nxt
    return _DevicePlan(device_id, anchors, segments, sched.jitter_sigma_m)


# ---------------------------------------------------------------------------
# Static feasibility: named inequality checks on parameter ranges


def _check_feasibility(spec: ScenarioSpec, cfg: DetectionConfig) -> None:
    sched = spec.schedule
    for inj in spec.injections:
        p = inj.params
        k = inj.kind
        if k == "round_trip_jump":
            if not p["jump_m"].lo > cfg.dist_c:
                raise GenerationError(
                    f"{k}: jump_m >= {p['jump_m'].lo} m violates "
                    f"'jump distance > dist_c' (dist_c = {cfg.dist_c} m)")
            if not 2 * sched.dwell_ping_gap_s.hi <= cfg.t_min:
                raise GenerationError(
                    f"{k}: round trip over two dwell gaps "
                    f"(2 * {sched.dwell_ping_gap_s.hi} s) violates "
                    f"'return time <= t_min' (t_min = {cfg.t_min} s)")
        elif k == "far_jump":
            if not p["jump_m"].lo - 2 * _SLACK_M > cfg.dist_g:
                raise GenerationError(
                    f"{k}: jump_m >= {p['jump_m'].lo} m violates "
                    f"'zone distance > dist_g' (dist_g = {cfg.dist_g} m "
                    f"plus zone-center slack)")
            if not sched.travel_ping_gap_s.hi + sched.dwell_ping_gap_s.hi < cfg.t_g:
                raise GenerationError(
                    f"{k}: entry gap up to {sched.travel_ping_gap_s.hi} s violates "
                    f"'time gap < t_g' (t_g = {cfg.t_g} s)")
        elif k == "triangle_jump":
            if not p["lead_s"].lo > cfg.t_g + 1:
                raise GenerationError(
                    f"{k}: lead_s >= {p['lead_s'].lo} s must exceed t_g "
                    f"({cfg.t_g} s) so the far-jump rule stays out of play")
            v_lo = (p["jump_m"].lo - 2 * _SLACK_M) / p["lead_s"].hi
            if not v_lo * v_lo > cfg.v_pair * cfg.v_pair:
                raise GenerationError(
                    f"{k}: leg speed {v_lo:.1f} m/s violates "
                    f"'v1 * v2 > v_pair^2' (v_pair = {cfg.v_pair} m/s)")
            if not p["burst_pings"].hi < cfg.freq_min:
                raise GenerationError(
                    f"{k}: burst_pings up to {p['burst_pings'].hi} violates "
                    f"'burst frequency < freq_min' ({cfg.freq_min})")
            span = (p["burst_pings"].hi - 1) * p["burst_gap_s"].hi
            if not span < cfg.dwell_min:
                raise GenerationError(
                    f"{k}: burst span {span} s violates "
                    f"'burst dwell < dwell_min' ({cfg.dwell_min} s)")
        elif k == "alternating_chain":
            if not p["jump_m"].hi + 2 * _SLACK_M < cfg.dist_g:
                raise GenerationError(
                    f"{k}: jump_m up to {p['jump_m'].hi} m violates "
                    f"'zone distance < dist_g' ({cfg.dist_g} m); larger jumps "
                    f"belong to far_jump")
            if not 2 * p["gap_s"].lo > cfg.t_min:
                raise GenerationError(
                    f"{k}: gap_s >= {p['gap_s'].lo} s violates "
                    f"'round trip > t_min' (t_min = {cfg.t_min} s)")
            v_lo = (p["jump_m"].lo - 2 * _SLACK_M) / p["gap_s"].hi
            if not v_lo * v_lo > cfg.v_pair * cfg.v_pair:
                raise GenerationError(
                    f"{k}: leg speed {v_lo:.1f} m/s violates "
                    f"'v1 * v2 > v_pair^2' (v_pair = {cfg.v_pair} m/s)")
            if not p["burst_pings"].hi < cfg.freq_min:
                raise GenerationError(
                    f"{k}: burst_pings up to {p['burst_pings'].hi} violates "
                    f"'burst frequency < freq_min' ({cfg.freq_min})")
            burst_span = (p["burst_pings"].hi - 1) * p["burst_gap_s"].hi
            chunk_span = (p["chunk_pings"].lo - 1) * p["chunk_gap_s"].lo
            if not burst_span < chunk_span:
                raise GenerationError(
                    f"{k}: burst span {burst_span} s violates 'burst dwell < "
                    f"normal dwell' (shortest chunk span {chunk_span} s)")
            if not burst_span < cfg.dwell_min:
                raise GenerationError(
                    f"{k}: burst span {burst_span} s violates "
                    f"'burst dwell < dwell_min' ({cfg.dwell_min} s)")


# ---------------------------------------------------------------------------
# Injection placement


def _dwell_free(dwell: _Dwell, lo: float, hi: float) -> bool:
    if lo < dwell.t0 + _WINDOW_MARGIN_S or hi > dwell.t1 - _WINDOW_MARGIN_S:
        return False
    for c_lo, c_hi in dwell.claims:
        if lo < c_hi + _WINDOW_MARGIN_S and hi > c_lo - _WINDOW_MARGIN_S:
            return False
    return True


_CLEAR_M = 1000.0  # jump targets keep this far from anchors and corridors


def _point_segment_distance_m(p, a, b) -> float:
    """Planar approximation of the distance from p to segment a-b; fine at
    the tens-of-km scale the clearance check works on."""
    m_lon = _DEG_M * math.cos(math.radians(a[0]))
    px, py = (p[1] - a[1]) * m_lon, (p[0] - a[0]) * _DEG_M
    bx, by = (b[1] - a[1]) * m_lon, (b[0] - a[0]) * _DEG_M
    denom = bx * bx + by * by
    f = 0.0 if denom == 0 else max(0.0, min(1.0, (px * bx + py * by) / denom))
    return math.hypot(px - f * bx, py - f * by)


def _target_clear(plan: _DevicePlan, target: tuple[float, float],
                  anchor_min: float, corridor_min: float,
                  src_anchor: int) -> bool:
    """The target must stay away from the device's anchors and travel
    corridors: their zones can be stable zones, which are immune to
    removal. The anchor being jumped from is exempt (the jump distance
    itself is the constraint there)."""
    for i, a in enumerate(plan.anchors):
        if i != src_anchor and great_circle_distance(*target, *a) <= anchor_min:
            return False
    for seg in plan.segments:
        if isinstance(seg, _Travel):
            d = _point_segment_distance_m(target, plan.anchors[seg.src],
                                          plan.anchors[seg.dst])
            if d <= corridor_min:
                return False
    return True


def _anchor_clear_target(plan: _DevicePlan, src_anchor: int, jump_m: float,
                         rng) -> Optional[tuple[float, float]]:
    """A jump target jump_m from the source anchor, clear of the device's
    own stable geography; None when no bearing works."""
    anchor = plan.anchors[src_anchor]
    anchor_min = min(jump_m * 0.8, 2500.0)
    corridor_min = min(jump_m * 0.45, 700.0)
    for _ in range(_PLACEMENT_TRIES):
        bearing = float(rng.uniform(0, 2 * math.pi))
        target = _offset_point(*anchor, bearing, jump_m)
        if _target_clear(plan, target, anchor_min, corridor_min, src_anchor):
            return target
    return None


def _anchor_inside_cell(anchor: tuple[float, float], precision: int,
                        margin_m: float) -> bool:
    """Anchor far enough from its geohash cell edges that jittered pings
    land in the same zone."""
    box = decode_geohash(encode_geohash(anchor[0], anchor[1], precision))
    lat, lon = anchor
    m_lon = _DEG_M * math.cos(math.radians(lat))
    return (min(lat - box.lat_min, box.lat_max - lat) * _DEG_M >= margin_m
            and min(lon - box.lon_min, box.lon_max - lon) * m_lon >= margin_m)


def _split_adjacent_travels(plan: _DevicePlan, dwell: _Dwell,
                            cfg: DetectionConfig) -> None:
    """Stretch the ping gap of travels next to this dwell so consecutive
    travel sightings sit more than dist_c apart. That splits communities
    at the dwell boundary, keeping the communities that flank an injected
    window anchored to the dwell location (slow, densely-pinged travel
    would otherwise chain them into neighboring visits)."""
    di = next(i for i, s in enumerate(plan.segments) if s is dwell)
    for ti in (di - 1, di + 1):
        if 0 <= ti < len(plan.segments) and isinstance(plan.segments[ti], _Travel):
            travel = plan.segments[ti]
            dist = great_circle_distance(*plan.anchors[travel.src],
                                         *plan.anchors[travel.dst])
            speed = dist / (travel.t1 - travel.t0)
            travel.gap = max(travel.gap, (cfg.dist_c + 150.0) / speed)


def _assign_injections(spec: ScenarioSpec, plans: list[_DevicePlan], rng,
                       cfg: DetectionConfig) -> None:
    serial = 0
    for inj in spec.injections:
        for _ in range(inj.count):
            serial += 1
            tid = f"{inj.kind}-{serial:04d}"
            for _ in range(_PLACEMENT_TRIES):
                plan = plans[int(rng.integers(0, len(plans)))]
                if _try_place(plan, inj, tid, rng, cfg):
                    break
            else:
                raise GenerationError(
                    f"cannot place injection {tid}: no free slot satisfies its "
                    f"constraints; reduce counts or lengthen dwells")


def _try_place(plan: _DevicePlan, inj: InjectionSpec, tid: str, rng,
               cfg: DetectionConfig) -> bool:
    p = inj.params
    if inj.kind == "round_trip_jump":
        dwells = [s for s in plan.segments if isinstance(s, _Dwell)
                  and 2 * s.gap <= cfg.t_min
                  and _anchor_inside_cell(plan.anchors[s.anchor], cfg.precision,
                                          2 * plan.jitter + 2.0)]
        if not dwells:
            return False
        dwell = dwells[int(rng.integers(0, len(dwells)))]
        grid = dwell.grid()
        lo_k = int(_WINDOW_MARGIN_S / dwell.gap) + 1
        hi_k = len(grid) - lo_k - 1
        if hi_k <= lo_k:
            return False
        k = int(rng.integers(lo_k, hi_k))
        if not _dwell_free(dwell, grid[k - 1], grid[k + 1]):
            return False
        jump = p["jump_m"].sample(rng)
        target = _anchor_clear_target(plan, dwell.anchor, jump, rng)
        if target is None:
            return False
        dwell.claims.append((grid[k - 1], grid[k + 1]))
        plan.pending.append(("round_trip_jump", tid, dwell, k, target, jump))
        return True

    if inj.kind == "far_jump":
        travels = []
        for i, s in enumerate(plan.segments):
            if (isinstance(s, _Travel) and not s.claimed and i > 0
                    and isinstance(plan.segments[i - 1], _Dwell)
                    and plan.segments[i - 1].t1 - plan.segments[i - 1].t0 >= cfg.dwell_min
                    and len(s.grid()) >= 3):
                travels.append((s, plan.segments[i - 1]))
        if not travels:
            return False
        travel, dwell = travels[int(rng.integers(0, len(travels)))]
        jump = p["jump_m"].sample(rng)
        target = _anchor_clear_target(plan, dwell.anchor, jump, rng)
        if target is None:
            return False
        travel.claimed = True
        plan.pending.append(("far_jump", tid, travel, 0, target, jump))
        return True

    if inj.kind == "triangle_jump":
        lead = p["lead_s"].sample(rng)
        n_burst = p["burst_pings"].sample_int(rng)
        bgap = p["burst_gap_s"].sample(rng)
        span = 2 * lead + (n_burst - 1) * bgap
        jump = p["jump_m"].sample(rng)
        return _claim_window(plan, rng, cfg, span, jump, (
            "triangle_jump", tid, lead, n_burst, bgap, jump))

    if inj.kind == "alternating_chain":
        gap = p["gap_s"].sample(rng)
        n_bursts = p["bursts"].sample_int(rng)
        n_bp = p["burst_pings"].sample_int(rng)
        bgap = p["burst_gap_s"].sample(rng)
        n_cp = p["chunk_pings"].sample_int(rng)
        cgap = p["chunk_gap_s"].sample(rng)
        burst_span = (n_bp - 1) * bgap
        chunk_span = (n_cp - 1) * cgap
        span = (2 * n_bursts) * gap + n_bursts * burst_span \
            + (n_bursts - 1) * chunk_span
        jump = p["jump_m"].sample(rng)
        return _claim_window(plan, rng, cfg, span, jump, (
            "alternating_chain", tid, gap, n_bursts, n_bp, bgap, n_cp, cgap, jump))

    return False


def _claim_window(plan: _DevicePlan, rng, cfg: DetectionConfig, span: float,
                  jump: float, step: tuple) -> bool:
    dwells = [s for s in plan.segments if isinstance(s, _Dwell)
              and (s.t1 - s.t0) >= span + 2 * _WINDOW_MARGIN_S + 2 * s.gap]
    if not dwells:
        return False
    dwell = dwells[int(rng.integers(0, len(dwells)))]
    grid = dwell.grid()
    lo_k = int(_WINDOW_MARGIN_S / dwell.gap) + 1
    hi_k = len(grid) - lo_k - 1
    ks = [k for k in range(lo_k, hi_k) if grid[k] + span <= dwell.t1 - _WINDOW_MARGIN_S]
    if not ks:
        return False
    k = ks[int(rng.integers(0, len(ks)))]
    if not _dwell_free(dwell, grid[k], grid[k] + span + dwell.gap):
        return False
    target = _anchor_clear_target(plan, dwell.anchor, jump, rng)
    if target is None:
        return False
    window = (grid[k], grid[k] + span + dwell.gap)
    dwell.claims.append(window)
    dwell.skips.append(window)
    _split_adjacent_travels(plan, dwell, cfg)
    plan.pending.append(step + (dwell, k, target))
    return True


# ---------------------------------------------------------------------------
# Emission


def _jitter(rng, sigma: float) -> tuple[float, float]:
    if sigma <= 0:
        return 0.0, 0.0
    n = rng.normal(0.0, sigma, size=2)
    return float(n[0]), float(n[1])


def _rt_pick(index, si: int, k: int, cfg: DetectionConfig) -> int:
    """Pick the grid slot whose neighbors share one zone: usually k as
    planned, else a nearby slot (jitter occasionally straddles a cell
    edge even with the anchor checked against its cell bounds)."""
    for k2 in (k, k - 1, k + 1, k - 2, k + 2, k - 3, k + 3, k - 4, k + 4):
        a = index.get((si, k2 - 1))
        m = index.get((si, k2))
        b = index.get((si, k2 + 1))
        if a is None or m is None or b is None or m.role is not None:
            continue
        if encode_geohash(a.lat, a.lon, cfg.precision) == \
                encode_geohash(b.lat, b.lon, cfg.precision):
            return k2
    raise GenerationError("round_trip_jump: no dwell slot whose flanking "
                          "pings share a zone; jitter_sigma_m is too large "
                          "for the geohash precision")


def _emit_row(rng, t: float, base: tuple[float, float], sigma: float,
              instance=None, role=None) -> _Row:
    north, east = _jitter(rng, sigma)
    lat = base[0] + north / _DEG_M
    lon = base[1] + east / (_DEG_M * math.cos(math.radians(base[0])))
    return _Row(_store(t, 1), _store(lat, 7), _store(lon, 7), instance, role)


def _materialize_device(plan: _DevicePlan, rng, cfg: DetectionConfig
                        ) -> list[_Row]:
    """Emit the base schedule, then apply this device's injections."""
    rows: list[_Row] = []
    index: dict[tuple[int, int], _Row] = {}
    for si, seg in enumerate(plan.segments):
        if isinstance(seg, _Dwell):
            anchor = plan.anchors[seg.anchor]
            for k, t in enumerate(seg.grid()):
                if any(lo < t <= hi for lo, hi in seg.skips):
                    continue
                row = _emit_row(rng, t, anchor, plan.jitter)
                rows.append(row)
                index[(si, k)] = row
        else:
            a = plan.anchors[seg.src]
            b = plan.anchors[seg.dst]
            dur = seg.t1 - seg.t0
            for k, t in enumerate(seg.grid()):
                f = (t - seg.t0) / dur
                base = (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
                row = _emit_row(rng, t, base, plan.jitter)
                rows.append(row)
                index[(si, k)] = row

    seg_index = {id(s): i for i, s in enumerate(plan.segments)}
    for step in plan.pending:
        kind = step[0]
        if kind == "round_trip_jump":
            _, tid, dwell, k, target, jump = step
            si = seg_index[id(dwell)]
            row = index.get((si, _rt_pick(index, si, k, cfg)))
            north, east = _jitter(rng, plan.jitter)
            row.lat = _store(target[0] + north / _DEG_M, 7)
            row.lon = _store(target[1] + east / (_DEG_M * math.cos(math.radians(target[0]))), 7)
            row.instance = tid
            row.role = "osc"
        elif kind == "far_jump":
            _, tid, travel, k, target, jump = step
            si = seg_index[id(travel)]
            row = index[(si, k)]
            north, east = _jitter(rng, plan.jitter)
            row.lat = _store(target[0] + north / _DEG_M, 7)
            row.lon = _store(target[1] + east / (_DEG_M * math.cos(math.radians(target[0]))), 7)
            row.instance = tid
            row.role = "osc"
        elif kind == "triangle_jump":
            _, tid, lead, n_burst, bgap, jump, dwell, k, target = step
            t0 = dwell.grid()[k]
            t = t0 + lead
            for _ in range(n_burst):
                rows.append(_emit_row(rng, t, target, plan.jitter, tid, "osc"))
                t += bgap
            t_last = t - bgap
            rows.append(_emit_row(rng, t_last + lead,
                                  plan.anchors[dwell.anchor], plan.jitter,
                                  tid, "aux"))
        elif kind == "alternating_chain":
            _, tid, gap, n_bursts, n_bp, bgap, n_cp, cgap, jump, dwell, k, target = step
            anchor = plan.anchors[dwell.anchor]
            t = dwell.grid()[k]
            for j in range(n_bursts):
                t += gap
                for _ in range(n_bp):
                    rows.append(_emit_row(rng, t, target, plan.jitter, tid, "osc"))
                    t += bgap
                t -= bgap
                if j < n_bursts - 1:
                    t += gap
                    for _ in range(n_cp):
                        rows.append(_emit_row(rng, t, anchor, plan.jitter, tid, "aux"))
                        t += cgap
                    t -= cgap
            rows.append(_emit_row(rng, t + gap, anchor, plan.jitter, tid, "aux"))

    rows.sort(key=lambda r: r.t)
    return rows


# ---------------------------------------------------------------------------
# Post-emission verification (constructive guarantee)


def _verify_device(plan: _DevicePlan, rows: list[_Row],
                   cfg: DetectionConfig) -> None:
    spans: dict[str, tuple[int, int]] = {}
    for i, r in enumerate(rows):
        if r.instance is None:
            continue
        lo, hi = spans.get(r.instance, (i, i))
        spans[r.instance] = (min(lo, i), max(hi, i))

    for step in plan.pending:
        kind, tid = step[0], step[1]
        lo, hi = spans[tid]
        if lo == 0 or hi == len(rows) - 1:
            raise GenerationError(f"{tid}: injection landed at the trace edge")
        prev = rows[lo - 1]
        nxt = rows[hi + 1]
        block = rows[lo:hi + 1]
        if any(r.instance != tid for r in block):
            raise GenerationError(f"{tid}: injection block interleaved with "
                                  f"other rows")
        if kind == "round_trip_jump":
            _verify_round_trip(tid, prev, block[0], nxt, cfg)
        elif kind == "far_jump":
            _verify_far_jump(tid, prev, block[0], nxt, cfg)
        elif kind == "triangle_jump":
            anchor = plan.anchors[step[6].anchor]
            _verify_triangle(tid, prev, block, nxt, anchor, cfg)
        elif kind == "alternating_chain":
            anchor = plan.anchors[step[9].anchor]
            _verify_chain(tid, prev, block, nxt, anchor, cfg)


def _fail(tid, what):
    raise GenerationError(f"{tid}: emitted geometry violates {what}")


def _verify_round_trip(tid, a: _Row, m: _Row, b: _Row, cfg) -> None:
    if not b.t - a.t <= cfg.t_min:
        _fail(tid, f"'return time <= t_min' ({b.t - a.t:.1f} s > {cfg.t_min} s)")
    d_am = great_circle_distance(a.lat, a.lon, m.lat, m.lon)
    d_mb = great_circle_distance(m.lat, m.lon, b.lat, b.lon)
    if not (d_am > cfg.dist_c and d_mb > cfg.dist_c):
        _fail(tid, f"'jump distance > dist_c' ({min(d_am, d_mb):.0f} m)")
    za = encode_geohash(a.lat, a.lon, cfg.precision)
    zb = encode_geohash(b.lat, b.lon, cfg.precision)
    zm = encode_geohash(m.lat, m.lon, cfg.precision)
    if za != zb:
        _fail(tid, "'anchor pings share one zone' (jitter straddled a cell edge)")
    if zm == za:
        _fail(tid, "'jump zone differs from the anchor zone'")


def _verify_far_jump(tid, prev: _Row, m: _Row, nxt: _Row, cfg) -> None:
    if not m.t - prev.t < cfg.t_g:
        _fail(tid, f"'time gap < t_g' ({m.t - prev.t:.1f} s)")
    from .detector import _zone_center_distance
    zp = encode_geohash(prev.lat, prev.lon, cfg.precision)
    zm = encode_geohash(m.lat, m.lon, cfg.precision)
    zn = encode_geohash(nxt.lat, nxt.lon, cfg.precision)
    if zm in (zp, zn):
        _fail(tid, "'jump zone differs from its neighbors'")
    if not _zone_center_distance(zp, zm) > cfg.dist_g:
        _fail(tid, f"'zone distance > dist_g' "
                   f"({_zone_center_distance(zp, zm):.0f} m)")


def _centroid(rows: list[_Row]) -> tuple[float, float]:
    return (sum(r.lat for r in rows) / len(rows),
            sum(r.lon for r in rows) / len(rows))


def _verify_triangle(tid, prev, block, nxt, anchor, cfg) -> None:
    bursts = [r for r in block if r.role == "osc"]
    ret = [r for r in block if r.role == "aux"]
    if not bursts or not ret:
        _fail(tid, "'burst and return rows present'")
    by = _centroid(bursts)
    d_leg = great_circle_distance(*anchor, *by)
    g1 = bursts[0].t - prev.t
    g2 = ret[0].t - bursts[-1].t
    if not (g1 > cfg.t_g and g2 > cfg.t_g):
        _fail(tid, f"'lead time > t_g' ({min(g1, g2):.1f} s)")
    v1 = (d_leg - _SLACK_M) / g1
    v2 = (d_leg - _SLACK_M) / g2
    if not v1 * v2 > cfg.v_pair * cfg.v_pair:
        _fail(tid, f"'v1 * v2 > v_pair^2' ({v1:.1f} * {v2:.1f} m/s)")
    if not 2 * _SLACK_M < cfg.tri_ratio * (d_leg - _SLACK_M):
        _fail(tid, "'endpoint distance < tri_ratio * min leg'")
    if not len(bursts) < cfg.freq_min:
        _fail(tid, f"'burst frequency < freq_min' ({len(bursts)})")
    if not bursts[-1].t - bursts[0].t < cfg.dwell_min:
        _fail(tid, "'burst dwell < dwell_min'")


def _verify_chain(tid, prev, block, nxt, anchor, cfg) -> None:
    # rebuild the planned alternation: bursts (osc) and chunks (aux),
    # bounded by the real dwell fragments
    groups: list[tuple[str, list[_Row]]] = []
    for r in block:
        if groups and groups[-1][0] == r.role:
            groups[-1][1].append(r)
        else:
            groups.append((r.role, [r]))
    if groups[-1][0] == "aux" and len(groups[-1][1]) == 1:
        ret = groups.pop()[1]  # trailing return row belongs to the next fragment
    else:
        _fail(tid, "'chain ends with a return row'")
    elements: list[tuple[tuple[float, float], float, float, float]] = []
    elements.append((anchor, prev.t, prev.t, 0.0))  # leading fragment proxy
    for role, rows_g in groups:
        pos = _centroid(rows_g)
        dur = rows_g[-1].t - rows_g[0].t
        elements.append((pos, rows_g[0].t, rows_g[-1].t, dur))
    elements.append((anchor, ret[0].t, ret[0].t, 0.0))  # trailing fragment proxy

    burst_durs = [e[3] for e, (role, _) in zip(elements[1:-1], groups) if role == "osc"]
    chunk_durs = [e[3] for e, (role, _) in zip(elements[1:-1], groups) if role == "aux"]
    if chunk_durs and not max(burst_durs) < min(chunk_durs):
        _fail(tid, "'burst dwell < normal dwell' (the dwell-time vote would flip)")
    if not len(groups) >= 3:
        _fail(tid, "'at least two overlapping triples'")

    def leg(e1, e2):
        d = great_circle_distance(*e1[0], *e2[0]) - _SLACK_M
        dt = max(e2[1] - e1[2], cfg.t_floor)
        return d, d / dt

    for i in range(len(elements) - 2):
        d12, v12 = leg(elements[i], elements[i + 1])
        d23, v23 = leg(elements[i + 1], elements[i + 2])
        if not v12 * v23 > cfg.v_pair * cfg.v_pair:
            _fail(tid, f"'v1 * v2 > v_pair^2' in triple {i + 1} "
                       f"({v12:.1f} * {v23:.1f} m/s)")
        d13 = great_circle_distance(*elements[i][0], *elements[i + 2][0]) + _SLACK_M
        if not d13 < cfg.tri_ratio * min(d12, d23):
            _fail(tid, f"'endpoint distance < tri_ratio * min leg' in triple {i + 1}")


# ---------------------------------------------------------------------------
# Dataset assembly


def _device_stream(spec: ScenarioSpec, cfg: DetectionConfig
                   ) -> Iterator[tuple[_DevicePlan, list[_Row]]]:
    _check_feasibility(spec, cfg)
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    plans = [_plan_device(spec, rng, f"d{d:04d}") for d in range(spec.devices)]
    if spec.injections and not plans:
        raise GenerationError("injections requested but no devices")
    _assign_injections(spec, plans, rng, cfg)
    for plan in plans:
        rows = _materialize_device(plan, rng, cfg)
        _verify_device(plan, rows, cfg)
        yield plan, rows


def generate(spec: ScenarioSpec, cfg: Optional[DetectionConfig] = None
             ) -> SyntheticDataset:
    """Materialize a scenario in memory: per-device traces with seq values
    matching what write_dataset would put on disk, plus ground truth."""
    cfg = cfg or DetectionConfig()
    traces = []
    truth = GroundTruth()
    templates: list[TemplateInstance] = []
    seq = 1  # line 1 is the header
    seen = set()
    for plan, rows in _device_stream(spec, cfg):
        pings = []
        for r in rows:
            seq += 1
            pings.append(Ping(plan.device_id, r.t, r.lat, r.lon, seq))
            truth.labels[(plan.device_id, seq)] = r.instance if r.role == "osc" else None
            if r.role == "osc" and r.instance not in seen:
                seen.add(r.instance)
        traces.append(Trace(plan.device_id, pings))
        for step in plan.pending:
            templates.append(TemplateInstance(step[1], step[0], plan.device_id, {}))
    return SyntheticDataset(traces, truth, templates)


TRACE_HEADER = "device_id,t,lat,lon"


def write_dataset(spec: ScenarioSpec, out_dir,
                  cfg: Optional[DetectionConfig] = None,
                  trace_name: str = "traces.csv",
                  truth_name: str = "truth.csv") -> dict:
    """Stream a scenario to disk (one device in memory at a time).

    Returns summary counts. Same seed, same bytes as generate()."""
    cfg = cfg or DetectionConfig()
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    trace_path = out_dir / trace_name
    truth_path = out_dir / truth_name
    n_rows = 0
    n_osc = 0
    n_templates = 0
    n_devices = 0
    with open(trace_path, "w", encoding="utf-8") as tf, \
            open(truth_path, "w", encoding="utf-8") as gf:
        tf.write(TRACE_HEADER + "\n")
        gf.write("device_id,seq,oscillation,template_id\n")
        seq = 1
        for plan, rows in _device_stream(spec, cfg):
            n_devices += 1
            n_templates += len(plan.pending)
            for r in rows:
                seq += 1
                tf.write(f"{plan.device_id},{r.t:.1f},{r.lat:.7f},{r.lon:.7f}\n")
                osc = 1 if r.role == "osc" else 0
                n_rows += 1
                n_osc += osc
                gf.write(f"{plan.device_id},{seq},{osc},"
                         f"{r.instance if osc else ''}\n")
    return {"devices": n_devices, "pings": n_rows, "oscillations": n_osc,
            "templates": n_templates,
            "trace_path": str(trace_path), "truth_path": str(truth_path)}


# ---------------------------------------------------------------------------
# Scoring


@dataclass
class Scores:
    tp: int
    fp: int
    fn: int
    true_normal: int

    @property
    def precision(self) -> float:
        return 1.0 if self.tp + self.fp == 0 else self.tp / (self.tp + self.fp)

    @property
    def recall(self) -> float:
        return 1.0 if self.tp + self.fn == 0 else self.tp / (self.tp + self.fn)

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 0.0 if p + r == 0 else 2 * p * r / (p + r)

    @property
    def data_loss_rate(self) -> float:
        return 0.0 if self.true_normal == 0 else self.fp / self.true_normal


def score(results: Union[DetectionResult, Iterable[DetectionResult]],
          truth: GroundTruth) -> Scores:
    """Precision/recall of removal decisions against per-ping truth.

    With no removals at all precision is 1 by convention (no positives);
    data_loss_rate is the share of true-normal pings wrongly removed.
    """
    if isinstance(results, DetectionResult):
        results = [results]
    removed: set[tuple[str, int]] = set()
    universe: set[tuple[str, int]] = set()
    for res in results:
        dev = res.cleaned.device_id
        for p in res.cleaned.pings:
            universe.add((dev, p.seq))
        for r in res.removals:
            key = (r.ping.device_id, r.ping.seq)
            removed.add(key)
            universe.add(key)
    truth_keys = set(truth.labels)
    if universe != truth_keys:
        missing = len(truth_keys - universe)
        extra = len(universe - truth_keys)
        raise ValueError(f"truth and result cover different pings "
                         f"({missing} missing, {extra} extra)")
    osc = truth.oscillation_keys()
    tp = len(removed & osc)
    fp = len(removed - osc)
    fn = len(osc - removed)
    return Scores(tp, fp, fn, true_normal=len(truth_keys) - len(osc))


def naive_speed_filter(trace: Trace, v_cut: float,
                       t_floor: float = 1.0) -> DetectionResult:
    """The speed-threshold baseline: drop any ping reached faster than
    v_cut from its immediate predecessor. Used only for comparison; this
    is the method whose false positives motivate the pattern heuristics.
    """
    removals = []
    kept = []
    prev = None
    for p in trace.pings:
        if prev is not None and segment_speed(prev, p, t_floor) > v_cut:
            removals.append(LabeledRemoval(p, NAIVE_SPEED, 1))
        else:
            kept.append(p)
        prev = p
    return DetectionResult(Trace(trace.device_id, kept), removals, 1, True)


# ---------------------------------------------------------------------------
# Threshold sweeps


@dataclass
class SweepPoint:
    value: float
    removals: int
    precision: float
    recall: float
    f1: float


def sweep(traces: list[Trace], truth: GroundTruth, parameter: str,
          grid: Iterable, cfg: Optional[DetectionConfig] = None
          ) -> list[SweepPoint]:
    """Re-run detection for each grid value of one config field and score
    against truth; the machinery behind duration-threshold sensitivity
    plots."""
    cfg = cfg or DetectionConfig()
    points = []
    for value in grid:
        c = cfg.with_value(parameter, value)
        results = [detect(t, c) for t in traces]
        s = score(results, truth)
        points.append(SweepPoint(value, s.tp + s.fp, s.precision, s.recall, s.f1))
    return points
