"""Core immutable trace types, validation rules, and file formats.

Traces arrive as JSON Lines (one sample object per line, snake_case keys,
absent channels omitted).  A road network is a single JSON document with
``nodes`` and ``edges``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .errors import BadInput, NonMonotonicTime, OutOfRangeField, TooShort

Vec3 = tuple[float, float, float]

GRAVITY_NORM_MIN = 8.0
GRAVITY_NORM_MAX = 11.6
RSS_MIN_DBM = -140.0
RSS_MAX_DBM = -20.0


@dataclass(frozen=True, slots=True)
class SensorSample:
    """One timestamped multi-sensor reading.

    Absent channels are None (never zero-filled): classifiers that need a
    missing channel abstain instead of guessing.
    """

    timestamp_ms: int
    accel: Vec3 | None = None           # m/s^2, device frame
    gyro: Vec3 | None = None            # rad/s, device frame
    magnet: Vec3 | None = None          # uT, device frame
    gravity: Vec3 | None = None         # m/s^2, device frame
    orientation: Vec3 | None = None     # azimuth/pitch/roll, radians
    serving_cell: str | None = None
    serving_rss_dbm: float | None = None
    neighbor_cells: tuple[tuple[str, float], ...] = ()
    lat_deg: float | None = None
    lon_deg: float | None = None
    loc_accuracy_m: float | None = None

    @property
    def has_location(self):
        return self.lat_deg is not None and self.lon_deg is not None


@dataclass(frozen=True, slots=True)
class Trace:
    """An ordered, validated sequence of samples from one contributor."""

    trace_id: str
    samples: tuple[SensorSample, ...]
    declared_indoor: bool | None = None


def _check_vec3(name, v):
    if v is not None and len(v) != 3:
        raise OutOfRangeField(f"{name} must have exactly 3 components")


def validate_trace(raw: Trace) -> Trace:
    """Admit a trace to the pipeline, or raise the first violated rule.

    Raises TooShort, NonMonotonicTime, or OutOfRangeField.
    """
    if len(raw.samples) < 2:
        raise TooShort(f"trace {raw.trace_id!r} has {len(raw.samples)} samples, need >= 2")
    prev_ts = None
    for i, s in enumerate(raw.samples):
        if prev_ts is not None and s.timestamp_ms <= prev_ts:
            raise NonMonotonicTime(
                f"trace {raw.trace_id!r} sample {i}: timestamp {s.timestamp_ms} <= {prev_ts}"
            )
        prev_ts = s.timestamp_ms
        for name in ("accel", "gyro", "magnet", "gravity", "orientation"):
            _check_vec3(name, getattr(s, name))
        if s.lat_deg is not None and abs(s.lat_deg) > 90.0:
            raise OutOfRangeField(f"trace {raw.trace_id!r} sample {i}: lat_deg {s.lat_deg}")
        if s.lon_deg is not None and abs(s.lon_deg) > 180.0:
            raise OutOfRangeField(f"trace {raw.trace_id!r} sample {i}: lon_deg {s.lon_deg}")
        if s.loc_accuracy_m is not None and s.loc_accuracy_m < 0.0:
            raise OutOfRangeField(f"trace {raw.trace_id!r} sample {i}: loc_accuracy_m {s.loc_accuracy_m}")
        if s.gravity is not None:
            norm = (s.gravity[0] ** 2 + s.gravity[1] ** 2 + s.gravity[2] ** 2) ** 0.5
            if not (GRAVITY_NORM_MIN <= norm <= GRAVITY_NORM_MAX):
                raise OutOfRangeField(
                    f"trace {raw.trace_id!r} sample {i}: |gravity| = {norm:.3f} outside "
                    f"[{GRAVITY_NORM_MIN}, {GRAVITY_NORM_MAX}]"
                )
        if s.serving_rss_dbm is not None and not (RSS_MIN_DBM <= s.serving_rss_dbm <= RSS_MAX_DBM):
            raise OutOfRangeField(f"trace {raw.trace_id!r} sample {i}: serving_rss_dbm {s.serving_rss_dbm}")
    return raw


# ---------------------------------------------------------------------------
# JSON Lines serialization

_VEC_FIELDS = ("accel", "gyro", "magnet", "gravity", "orientation")
_SCALAR_FIELDS = ("serving_cell", "serving_rss_dbm", "lat_deg", "lon_deg", "loc_accuracy_m")


def sample_to_dict(s: SensorSample) -> dict:
    d = {"timestamp_ms": s.timestamp_ms}
    for name in _VEC_FIELDS:
        v = getattr(s, name)
        if v is not None:
            d[name] = list(v)
    for name in _SCALAR_FIELDS:
        v = getattr(s, name)
        if v is not None:
            d[name] = v
    if s.neighbor_cells:
        d["neighbor_cells"] = [[c, r] for c, r in s.neighbor_cells]
    return d


def sample_from_dict(d: dict) -> SensorSample:
    kwargs = {"timestamp_ms": int(d["timestamp_ms"])}
    for name in _VEC_FIELDS:
        if name in d:
            kwargs[name] = tuple(float(x) for x in d[name])
    for name in _SCALAR_FIELDS:
        if name in d:
            v = d[name]
            kwargs[name] = v if name == "serving_cell" else float(v)
    if "neighbor_cells" in d:
        kwargs["neighbor_cells"] = tuple((str(c), float(r)) for c, r in d["neighbor_cells"])
    return SensorSample(**kwargs)


def write_traces_jsonl(traces, path):
    """Write traces as JSON Lines; each line carries its trace_id."""
    with open(path, "w", encoding="utf-8") as fh:
        for tr in traces:
            for i, s in enumerate(tr.samples):
                d = {"trace_id": tr.trace_id}
                if i == 0 and tr.declared_indoor is not None:
                    d["declared_indoor"] = tr.declared_indoor
                d.update(sample_to_dict(s))
                fh.write(json.dumps(d, separators=(",", ":")) + "\n")


def read_traces_jsonl(path) -> list[Trace]:
    """Parse a JSON Lines trace file, grouping consecutive lines by trace_id.

    Raises BadInput with the offending line number on malformed lines.
    """
    traces = []
    cur_id = None
    cur_samples = []
    cur_indoor = None

    def flush():
        if cur_id is not None:
            traces.append(Trace(cur_id, tuple(cur_samples), cur_indoor))

    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                d = json.loads(line)
                tid = d["trace_id"]
                sample = sample_from_dict(d)
            except (ValueError, KeyError, TypeError) as exc:
                raise BadInput(f"malformed trace line: {exc}", path=str(path), line=lineno) from exc
            if tid != cur_id:
                flush()
                cur_id = tid
                cur_samples = []
                cur_indoor = None
            if "declared_indoor" in d:
                cur_indoor = bool(d["declared_indoor"])
            cur_samples.append(sample)
    flush()
    return traces


# ---------------------------------------------------------------------------
# Road network

ROAD = "road"
RAILWAY = "railway"


@dataclass(frozen=True)
class RoadNetwork:
    """Nodes (lat, lon), edges between them, and derived intersections."""

    nodes: dict[str, tuple[float, float]]
    edges: tuple[tuple[str, str, str], ...]  # (node a, node b, kind)
    intersections: tuple[str, ...] = field(default=())

    def __post_init__(self):
        for a, b, kind in self.edges:
            if a not in self.nodes or b not in self.nodes:
                raise BadInput(f"edge ({a}, {b}) references unknown node")
            if kind not in (ROAD, RAILWAY):
                raise BadInput(f"edge ({a}, {b}) has unknown kind {kind!r}")
        degree = {}
        for a, b, kind in self.edges:
            if kind == ROAD:
                degree[a] = degree.get(a, 0) + 1
                degree[b] = degree.get(b, 0) + 1
        derived = tuple(sorted(n for n, d in degree.items() if d >= 3))
        object.__setattr__(self, "intersections", derived)

    def road_edges(self):
        return [(a, b) for a, b, kind in self.edges if kind == ROAD]

    def railway_edges(self):
        return [(a, b) for a, b, kind in self.edges if kind == RAILWAY]


def network_to_dict(net: RoadNetwork) -> dict:
    return {
        "nodes": {k: list(v) for k, v in net.nodes.items()},
        "edges": [list(e) for e in net.edges],
    }


def network_from_dict(d: dict) -> RoadNetwork:
    try:
        nodes = {str(k): (float(v[0]), float(v[1])) for k, v in d["nodes"].items()}
        edges = tuple((str(a), str(b), str(kind)) for a, b, kind in d["edges"])
    except (KeyError, ValueError, TypeError) as exc:
        raise BadInput(f"malformed road network: {exc}") from exc
    return RoadNetwork(nodes=nodes, edges=edges)


def write_network_json(net: RoadNetwork, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(network_to_dict(net), fh, separators=(",", ":"), sort_keys=True)


def read_network_json(path) -> RoadNetwork:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            d = json.load(fh)
        except ValueError as exc:
            raise BadInput(f"malformed road network JSON: {exc}", path=str(path)) from exc
    return network_from_dict(d)
