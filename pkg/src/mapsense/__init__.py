"""Crowd-sensed map semantics from phone sensor traces.

Turns multi-sensor traces (inertial, magnetic, cellular, location) into
map features: tunnels, bridges, bumps, cat's eyes, railway crossings,
roundabouts, intersection turns, stop signs, traffic lights, underpasses,
stairs, escalators, footbridges, crosswalks, and lane counts.  Ships with
a deterministic trace simulator that doubles as the evaluation oracle.
"""

from .config import PED_KINDS, VEH_KINDS, PipelineConfig
from .errors import (
    AbstainMissingChannel,
    BadInput,
    DegenerateOrientation,
    EmptyNetwork,
    EmptySeries,
    InsufficientTraces,
    InvalidScenario,
    MapSenseError,
    NonMonotonicTime,
    OutOfRangeField,
    ProvenanceMismatch,
    TooShort,
    TraceRejected,
)
from .pipeline import PipelineResult, classify_trace, run_pipeline
from .semantics import Detection
from .trace import (
    RoadNetwork,
    SensorSample,
    Trace,
    read_network_json,
    read_traces_jsonl,
    validate_trace,
    write_network_json,
    write_traces_jsonl,
)

__version__ = "0.1.0"

__all__ = [
    "AbstainMissingChannel",
    "BadInput",
    "DegenerateOrientation",
    "Detection",
    "EmptyNetwork",
    "EmptySeries",
    "InsufficientTraces",
    "InvalidScenario",
    "MapSenseError",
    "NonMonotonicTime",
    "OutOfRangeField",
    "PED_KINDS",
    "PipelineConfig",
    "PipelineResult",
    "ProvenanceMismatch",
    "RoadNetwork",
    "SensorSample",
    "TooShort",
    "Trace",
    "TraceRejected",
    "VEH_KINDS",
    "classify_trace",
    "read_network_json",
    "read_traces_jsonl",
    "run_pipeline",
    "validate_trace",
    "write_network_json",
    "write_traces_jsonl",
]
