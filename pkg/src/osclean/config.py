"""Detection thresholds, unit parsing, and config file handling.

Config files and CLI overrides accept values in the units the thresholds
are naturally quoted in ("0.5mi", "155mph", "2.5min", "300s"); internally
everything is meters, seconds, and m/s. Conversions and the t_min
derivation run in exact decimal arithmetic so that round numbers stay
round: 2 * 0.5mi / 120mph is exactly 30 s, not 30.000000000000004.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation
from fractions import Fraction
from typing import Optional

MILE_M = 1609.344
MPH_MPS = 0.44704  # 1609.344 / 3600


class ConfigError(ValueError):
    """Bad threshold value, unknown key, or malformed config file."""


def _exact(x) -> Fraction:
    """The decimal value a float's shortest repr denotes, as a Fraction."""
    try:
        return Fraction(Decimal(str(x)))
    except InvalidOperation:
        raise ConfigError(f"not a finite number: {x!r}") from None


# unit suffix -> (dimension, factor to native unit)
_UNITS = {
    "m": ("distance", Fraction(1)),
    "km": ("distance", Fraction(1000)),
    "mi": ("distance", _exact(MILE_M)),
    "mps": ("speed", Fraction(1)),
    "m/s": ("speed", Fraction(1)),
    "mph": ("speed", _exact(MPH_MPS)),
    "kmh": ("speed", Fraction(1000, 3600)),
    "s": ("time", Fraction(1)),
    "sec": ("time", Fraction(1)),
    "min": ("time", Fraction(60)),
    "h": ("time", Fraction(3600)),
}

_VALUE_RE = re.compile(r"^\s*([-+]?\d*\.?\d+(?:[eE][-+]?\d+)?)\s*([a-zA-Z/]*)\s*$")


def parse_quantity(text: str, dimension: str) -> float:
    """Parse '0.5mi' / '150s' / '69.2912' into the native unit for the
    given dimension (distance: m, speed: m/s, time: s). A bare number is
    already in native units; a suffix of the wrong dimension is an error.
    """
    m = _VALUE_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse value {text!r}")
    number, suffix = m.groups()
    value = Fraction(Decimal(number))
    if suffix:
        if suffix not in _UNITS:
            raise ConfigError(f"unknown unit {suffix!r} in {text!r}")
        dim, factor = _UNITS[suffix]
        if dim != dimension:
            raise ConfigError(
                f"unit {suffix!r} is a {dim} unit; {dimension} expected in {text!r}")
        value *= factor
    return float(value)


def derive_t_min(dist_c: float, v_max: float) -> float:
    """Round-trip time bound 2 * dist_c / v_max, in seconds.

    Computed in exact decimal arithmetic so the documented defaults give
    exactly 30 s.
    """
    if not (dist_c > 0 and v_max > 0):
        raise ConfigError(f"dist_c and v_max must be positive "
                          f"(got {dist_c}, {v_max})")
    return float(2 * _exact(dist_c) / _exact(v_max))


# field name -> dimension used by parse_quantity / the CLI ("scalar" is a
# bare float, "count" an integer)
FIELD_DIMENSIONS = {
    "precision": "count",
    "dist_c": "distance",
    "v_max": "speed",
    "t_min": "time",
    "dist_g": "distance",
    "t_g": "time",
    "v_pair": "speed",
    "tri_ratio": "scalar",
    "freq_min": "count",
    "dwell_min": "time",
    "detour_factor": "scalar",
    "t_floor": "time",
    "max_passes": "count",
}


@dataclass(frozen=True)
class DetectionConfig:
    """Every threshold the detector uses, in meters / seconds / m/s.

    Defaults: 0.5 mi community gap, 120 mph max ground speed (155 mph
    divided by the 1.3 detour factor, rounded), 5 mi / 2.5 min far-jump
    bounds, 155 mph squared-speed pair bound, 0.25 triangle ratio,
    5 sightings or 300 s for stability.
    """

    precision: int = 7
    dist_c: float = 804.672            # 0.5 mi
    v_max: float = 53.6448             # 120 mph
    t_min: float = 30.0                # derived: 2 * dist_c / v_max
    dist_g: float = 8046.72            # 5 mi
    t_g: float = 150.0                 # 2.5 min
    v_pair: float = 69.2912            # 155 mph, used squared
    tri_ratio: float = 0.25
    freq_min: int = 5
    dwell_min: float = 300.0
    detour_factor: float = 1.3         # provenance of v_max, not used directly
    t_floor: float = 1.0
    max_passes: int = 10
    t_min_explicit: bool = False       # True when t_min was set by hand

    def __post_init__(self):
        if not 1 <= self.precision <= 12:
            raise ConfigError(f"precision must be in [1, 12], got {self.precision}")
        for name in ("dist_c", "v_max", "t_min", "dist_g", "t_g", "v_pair",
                     "dwell_min", "detour_factor", "t_floor"):
            v = getattr(self, name)
            if not v > 0:
                raise ConfigError(f"{name} must be positive, got {v}")
        if not 0 < self.tri_ratio < 1:
            raise ConfigError(f"tri_ratio must be in (0, 1), got {self.tri_ratio}")
        if self.freq_min < 1:
            raise ConfigError(f"freq_min must be >= 1, got {self.freq_min}")
        if self.max_passes < 1:
            raise ConfigError(f"max_passes must be >= 1, got {self.max_passes}")

    def with_value(self, name: str, value) -> "DetectionConfig":
        """Copy with one field replaced; t_min is re-derived when dist_c
        or v_max changes unless it was set explicitly."""
        if name not in FIELD_DIMENSIONS:
            raise ConfigError(f"unknown config field {name!r}; known: "
                              + ", ".join(sorted(FIELD_DIMENSIONS)))
        changes = {name: value}
        if name == "t_min":
            changes["t_min_explicit"] = True
        elif name in ("dist_c", "v_max") and not self.t_min_explicit:
            new_dist_c = value if name == "dist_c" else self.dist_c
            new_v_max = value if name == "v_max" else self.v_max
            changes["t_min"] = derive_t_min(new_dist_c, new_v_max)
        return dataclasses.replace(self, **changes)


def build_config(values: Optional[dict[str, str]] = None) -> DetectionConfig:
    """Build a DetectionConfig from raw text values (file or CLI), parsing
    unit suffixes per field. t_min defaults to the derived value."""
    values = dict(values or {})
    kwargs = {}
    for name, raw in values.items():
        if name not in FIELD_DIMENSIONS:
            raise ConfigError(f"unknown config key {name!r}; known: "
                              + ", ".join(sorted(FIELD_DIMENSIONS)))
        dim = FIELD_DIMENSIONS[name]
        if dim == "count":
            try:
                kwargs[name] = int(str(raw).strip())
            except ValueError:
                raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
        elif dim == "scalar":
            try:
                kwargs[name] = float(str(raw).strip())
            except ValueError:
                raise ConfigError(f"{name} must be a number, got {raw!r}") from None
        else:
            kwargs[name] = parse_quantity(str(raw), dim)
    if "t_min" in kwargs:
        kwargs["t_min_explicit"] = True
    else:
        base = DetectionConfig()
        kwargs["t_min"] = derive_t_min(kwargs.get("dist_c", base.dist_c),
                                       kwargs.get("v_max", base.v_max))
    return DetectionConfig(**kwargs)


def read_config_file(path) -> dict[str, str]:
    """Read 'key = value' lines; '#' starts a comment, blanks ignored."""
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{line_no}: expected 'key = value', "
                                  f"got {raw.strip()!r}")
            key, value = line.split("=", 1)
            key = key.strip()
            value = value.strip()
            if not value:
                raise ConfigError(f"{path}:{line_no}: empty value for {key!r}")
            if key in values:
                raise ConfigError(f"{path}:{line_no}: duplicate key {key!r}")
            values[key] = value
    return values


def load_config(path=None, overrides: Optional[dict[str, str]] = None
                ) -> DetectionConfig:
    """Config file (optional) with CLI overrides layered on top."""
    values = read_config_file(path) if path else {}
    values.update(overrides or {})
    return build_config(values)


def config_echo(cfg: DetectionConfig) -> list[tuple[str, str]]:
    """Human-oriented echo of the active thresholds, in both native and
    source units where that aids reading."""
    return [
        ("precision", str(cfg.precision)),
        ("dist_c", f"{cfg.dist_c:g} m ({cfg.dist_c / MILE_M:g} mi)"),
        ("v_max", f"{cfg.v_max:g} m/s ({cfg.v_max / MPH_MPS:g} mph)"),
        ("t_min", f"{cfg.t_min:g} s" + ("" if cfg.t_min_explicit else " (derived)")),
        ("dist_g", f"{cfg.dist_g:g} m ({cfg.dist_g / MILE_M:g} mi)"),
        ("t_g", f"{cfg.t_g:g} s"),
        ("v_pair", f"{cfg.v_pair:g} m/s ({cfg.v_pair / MPH_MPS:g} mph)"),
        ("tri_ratio", f"{cfg.tri_ratio:g}"),
        ("freq_min", str(cfg.freq_min)),
        ("dwell_min", f"{cfg.dwell_min:g} s"),
        ("detour_factor", f"{cfg.detour_factor:g}"),
        ("t_floor", f"{cfg.t_floor:g} s"),
        ("max_passes", str(cfg.max_passes)),
    ]
