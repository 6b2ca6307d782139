"""osclean: oscillation-point detection and removal for passively
collected GPS ping streams.

Pipeline: project pings to geohash zones, grow distance-bounded
communities, classify them stable or unstable, then apply four pattern
heuristics (round-trip jumps, far jumps, triangle jumps, alternating
chains) recursively until no removals remain. A synthetic-injection
harness provides labeled ground truth for verifying detection quality.
"""

from .communities import (
    Community,
    CommunitySequence,
    ZonedPing,
    build_communities,
    classify_stability,
    community_kinematics,
    project_trace,
    stable_zone_set,
)
from .config import ConfigError, DetectionConfig, derive_t_min, load_config
from .detector import (
    ALL_HEURISTICS,
    DetectionResult,
    LabeledRemoval,
    detect,
    heuristic_1a,
    heuristic_1b,
    heuristic_2a,
    heuristic_2a_condition,
    heuristic_2b,
    run_pass,
)
from .geo import (
    CellBox,
    LatLon,
    decode_geohash,
    encode_geohash,
    great_circle_distance,
    segment_speed,
)
from .pipeline import clean_file
from .synth import (
    GenerationError,
    GroundTruth,
    ScenarioSpec,
    generate,
    naive_speed_filter,
    score,
    sweep,
    write_dataset,
)
from .trace import Ping, Schema, Trace, build_trace, parse_ping_record, stream_devices

__version__ = "0.1.0"

__all__ = [
    "ALL_HEURISTICS", "CellBox", "Community", "CommunitySequence",
    "ConfigError", "DetectionConfig", "DetectionResult", "GenerationError",
    "GroundTruth", "LabeledRemoval", "LatLon", "Ping", "ScenarioSpec",
    "Schema", "Trace", "ZonedPing", "build_communities", "build_trace",
    "classify_stability", "clean_file", "community_kinematics",
    "decode_geohash", "derive_t_min", "detect", "encode_geohash", "generate",
    "great_circle_distance", "heuristic_1a", "heuristic_1b", "heuristic_2a",
    "heuristic_2a_condition", "heuristic_2b", "load_config",
    "naive_speed_filter", "parse_ping_record", "project_trace", "run_pass",
    "score", "segment_speed", "stable_zone_set", "stream_devices", "sweep",
    "write_dataset",
]
