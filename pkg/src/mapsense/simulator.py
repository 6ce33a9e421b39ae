"""Deterministic sensor-trace simulator with exact ground truth.

The built-in benchmark scenario lays out a staircase-shaped vehicle route
(tunnel, bridge, bump, cat's eye, railway crossing, roundabout, turn, stop
sign, traffic light per block) and a pedestrian path (underpass, stairs,
escalator, footbridge, crosswalk per block), then drives several agents
with distinct phone mounts, sample rates, and noise draws over them.  The
placed features and per-agent transit times are written alongside the
traces, so the simulator doubles as the evaluation oracle.

All randomness flows from one seed through spawned child generators, one
per agent, so traces are bitwise reproducible and independent of agent
order.  Floats are rounded at generation time, which makes the JSONL
round-trip lossless.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidScenario
from .geo import haversine_m, xy_to_latlon
from .trace import ROAD, RAILWAY, RoadNetwork, SensorSample, Trace

SIM_T0_MS = 1_700_000_000_000
ORIGIN = (40.0, -75.0)          # all local x/y meters are relative to this
GRAVITY = 9.81
B_ENU = (0.0, 20.0, -40.0)      # ambient magnetic field, uT (east, north, up)

# baseline noise levels
GRAVITY_NOISE = 0.05
ACCEL_NOISE = 0.05
MAGNET_NOISE = 0.4
AZIMUTH_NOISE = 0.002
RSS_NOISE = 1.2
RSS_BASE_DBM = -75.0

# signal strengths per feature
TUNNEL_RSS_DROP = -18.0
TUNNEL_MAGNET_SIGMA = 3.0
BRIDGE_GRAVITY_AMP = 1.2
BUMP_GRAVITY_HALF = 1.4         # uniform burst half-width, both gravity axes
RAILWAY_GRAVITY_HALF = 0.22
CATSEYE_ACCEL_SIGMA = 1.5
UNDERPASS_RSS_DROP = -15.0
PED_MAGNET_SIGMA = 2.0
WALK_OSC_AMP = 2.2
WALK_OSC_HZ = 1.9
STAIRS_OSC_HZ = 1.6
STAIRS_DOWN_AMP = 3.5

# vehicle block geometry (stations from block start, meters)
V_TUNNEL = (30.0, 62.0)
V_BRIDGE = (92.0, 156.0)
V_BUMP = (186.0, 188.0)
V_CATSEYE = (218.0, 219.0)
V_RAILWAY = (249.0, 267.0)
V_ROUNDABOUT_S = 312.0
V_ROUNDABOUT_HALF = 13.0
V_CORNER1_S = 372.0             # east leg ends, turn north
V_STOP_S = 432.0
V_LIGHT_S = 472.0
V_BLOCK_S = 527.0               # corner 2, turn east again
V_LEAD_IN = 80.0
V_EAST_LEN = 372.0
V_NORTH_LEN = 155.0
V_SPEED = 7.0
V_TURN_SPEED = 5.0
V_STOP_SPEED = 0.3
V_LIGHT_SPEED = 1.0

# pedestrian block geometry (stations along the path, meters)
P_UNDERPASS = (36.0, 48.0)
P_STAIRS = (84.0, 87.0)
P_ESCALATOR = (123.0, 131.0)
P_FB_UP = (167.0, 170.0)
P_FB_WALK = (170.0, 184.0)
P_FB_DOWN = (184.0, 187.0)
P_CROSSING = (223.0, 231.0)
P_BLOCK_S = 267.0
P_ROAD_HALF = 4.0               # crossing displacement 8 m -> 2 lanes
P_WALK_SPEED = 1.4
P_STAIRS_SPEED = 0.5
P_ESCALATOR_SPEED = 0.6

N_BLOCKS = 5
VEHICLE_AGENTS = (("v00", 50), ("v01", 50), ("v02", 40), ("v03", 40), ("v04", 32), ("v05", 32))
PED_AGENTS = (("p00", 32), ("p01", 32), ("p02", 25), ("p03", 25), ("p04", 20), ("p05", 20))
PED_Y = 1000.0                  # pedestrian area sits 1 km north of the vehicle route


# ---------------------------------------------------------------------------
# Ground truth containers

@dataclass(frozen=True)
class TruthFeature:
    """One placed map feature (location and expected attributes)."""

    kind: str
    lat: float
    lon: float
    attributes: dict = field(default_factory=dict)


@dataclass(frozen=True)
class TruthSpan:
    """One agent transiting one placed feature."""

    trace_id: str
    kind: str
    lat: float
    lon: float
    t_start_ms: int
    t_end_ms: int


@dataclass
class GroundTruth:
    features: list[TruthFeature]
    spans: list[TruthSpan]
    network_length_m: float

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for sp in self.spans:
            out[sp.kind] = out.get(sp.kind, 0) + 1
        return out

    def to_dict(self):
        return {
            "network_length_m": round(self.network_length_m, 1),
            "features": [
                {"kind": f.kind, "lat": f.lat, "lon": f.lon, "attributes": f.attributes}
                for f in self.features
            ],
            "spans": [
                {
                    "trace_id": s.trace_id, "kind": s.kind, "lat": s.lat, "lon": s.lon,
                    "t_start_ms": s.t_start_ms, "t_end_ms": s.t_end_ms,
                }
                for s in self.spans
            ],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            features=[
                TruthFeature(f["kind"], float(f["lat"]), float(f["lon"]), dict(f.get("attributes", {})))
                for f in d["features"]
            ],
            spans=[
                TruthSpan(
                    s["trace_id"], s["kind"], float(s["lat"]), float(s["lon"]),
                    int(s["t_start_ms"]), int(s["t_end_ms"]),
                )
                for s in d["spans"]
            ],
            network_length_m=float(d["network_length_m"]),
        )


def write_truth_json(truth: GroundTruth, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(truth.to_dict(), fh, separators=(",", ":"), sort_keys=True)


def read_truth_json(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        return GroundTruth.from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# Route machinery

def _latlon(x, y):
    lat, lon = xy_to_latlon(ORIGIN, np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if np.ndim(lat) == 0:
        return float(lat), float(lon)
    return lat, lon


@dataclass
class _Route:
    """A polyline with precomputed fine-grid position and bearing profiles."""

    s_grid: np.ndarray
    x_grid: np.ndarray
    y_grid: np.ndarray
    bearing_grid: np.ndarray     # radians, 0 = north, clockwise, smoothed
    length: float

    @classmethod
    def from_vertices(cls, xs, ys, ds=0.5, smooth_m=20.0):
        xs = np.asarray(xs, dtype=float)
        ys = np.asarray(ys, dtype=float)
        seg = np.hypot(np.diff(xs), np.diff(ys))
        s_v = np.concatenate([[0.0], np.cumsum(seg)])
        length = float(s_v[-1])
        s_grid = np.arange(0.0, length + ds, ds)
        s_grid[-1] = length
        x_grid = np.interp(s_grid, s_v, xs)
        y_grid = np.interp(s_grid, s_v, ys)
        bseg = np.arctan2(np.diff(xs), np.diff(ys))
        bseg = np.unwrap(bseg)
        idx = np.clip(np.searchsorted(s_v, s_grid, side="right") - 1, 0, len(bseg) - 1)
        bearing = bseg[idx]
        k = max(1, int(round(smooth_m / ds)) | 1)
        bearing = np.convolve(bearing, np.ones(k) / k, mode="same")
        # the boxcar shrinks toward zero at the ends; pin them to the raw value
        edge = k // 2
        bearing[:edge] = bseg[0]
        bearing[-edge or len(bearing):] = bseg[-1]
        return cls(s_grid, x_grid, y_grid, bearing, length)

    def position(self, s):
        return np.interp(s, self.s_grid, self.x_grid), np.interp(s, self.s_grid, self.y_grid)

    def bearing(self, s):
        return np.interp(s, self.s_grid, self.bearing_grid)


def _speed_profile(s_grid, base, zones):
    """Elementwise minimum over piecewise-linear slow-zone constraints."""
    v = np.full_like(s_grid, base)
    for pts in zones:
        ps = np.array([p[0] for p in pts])
        pv = np.array([p[1] for p in pts])
        prof = np.interp(s_grid, ps, pv, left=base, right=base)
        v = np.minimum(v, prof)
    return v


def _time_of_station(s_grid, v_grid):
    ds = np.diff(s_grid)
    v_mid = 0.5 * (v_grid[1:] + v_grid[:-1])
    return np.concatenate([[0.0], np.cumsum(ds / np.maximum(v_mid, 0.05))])


def _in(s, a, b):
    return (s >= a) & (s < b)


def _rotation_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    kx, ky, kz = axis
    K = np.array([[0.0, -kz, ky], [kz, 0.0, -kx], [-ky, kx, 0.0]])
    return np.eye(3) + math.sin(angle) * K + (1.0 - math.cos(angle)) * (K @ K)


def _random_mount(rng):
    axis = rng.normal(size=3)
    while np.linalg.norm(axis) < 1e-6:
        axis = rng.normal(size=3)
    return _rotation_from_axis_angle(axis, rng.uniform(0.0, 2.0 * math.pi))


# ---------------------------------------------------------------------------
# Benchmark layout

def _vehicle_vertices():
    xs, ys = [-V_LEAD_IN], [0.0]
    x = y = 0.0
    for _ in range(N_BLOCKS):
        xs.append(x)
        ys.append(y)
        x += V_EAST_LEN
        xs.append(x)
        ys.append(y)
        y += V_NORTH_LEN
        xs.append(x)
        ys.append(y)
    return xs, ys


def _vehicle_block_origin(k):
    return k * V_EAST_LEN, k * V_NORTH_LEN


def _ped_vertices():
    xs, ys = [0.0], [PED_Y + P_ROAD_HALF]
    x = 0.0
    side = 1.0
    for _ in range(N_BLOCKS):
        x += P_CROSSING[0]
        xs.append(x)
        ys.append(PED_Y + side * P_ROAD_HALF)
        side = -side
        xs.append(x)
        ys.append(PED_Y + side * P_ROAD_HALF)
        x += P_BLOCK_S - P_CROSSING[1]
        xs.append(x)
        ys.append(PED_Y + side * P_ROAD_HALF)
    return xs, ys


def build_network() -> RoadNetwork:
    """Road network matching the benchmark layout (with junction stubs)."""
    nodes: dict[str, tuple[float, float]] = {}
    edges: list[tuple[str, str, str]] = []

    def add(name, x, y):
        nodes[name] = _latlon(x, y)
        return name

    prev = add("start", -V_LEAD_IN, 0.0)
    for k in range(N_BLOCKS):
        bx, by = _vehicle_block_origin(k)
        rb = add(f"rb{k}", bx + V_ROUNDABOUT_S, by)
        c1 = add(f"c1_{k}", bx + V_CORNER1_S, by)
        stp = add(f"stop{k}", bx + V_CORNER1_S, by + 60.0)
        lgt = add(f"light{k}", bx + V_CORNER1_S, by + 100.0)
        c2 = add(f"c2_{k}", bx + V_CORNER1_S, by + V_NORTH_LEN)
        for a, b in ((prev, rb), (rb, c1), (c1, stp), (stp, lgt), (lgt, c2)):
            edges.append((a, b, ROAD))
        # stubs give the junction nodes their third edge
        edges.append((rb, add(f"rb{k}s", bx + V_ROUNDABOUT_S, by + 15.0), ROAD))
        edges.append((c1, add(f"c1_{k}s", bx + V_CORNER1_S + 15.0, by), ROAD))
        edges.append((stp, add(f"stop{k}s", bx + V_CORNER1_S + 15.0, by + 60.0), ROAD))
        edges.append((lgt, add(f"light{k}s", bx + V_CORNER1_S + 15.0, by + 100.0), ROAD))
        # railway crossing the east leg
        rw_x = bx + 0.5 * (V_RAILWAY[0] + V_RAILWAY[1])
        ra = add(f"rw{k}a", rw_x, by - 20.0)
        rb2 = add(f"rw{k}b", rw_x, by + 20.0)
        edges.append((ra, rb2, RAILWAY))
        prev = c2
    pa = add("ped_a", -40.0, PED_Y)
    pb = add("ped_b", N_BLOCKS * (P_BLOCK_S - (P_CROSSING[1] - P_CROSSING[0])) + 40.0, PED_Y)
    edges.append((pa, pb, ROAD))
    return RoadNetwork(nodes=nodes, edges=tuple(edges))


def network_length_m(net: RoadNetwork) -> float:
    total = 0.0
    for a, b, _ in net.edges:
        total += haversine_m(net.nodes[a], net.nodes[b])
    return total


# ---------------------------------------------------------------------------
# Truth placement

def _vehicle_truth_features():
    feats = []
    for k in range(N_BLOCKS):
        bx, by = _vehicle_block_origin(k)

        def at(x, y=by):
            lat, lon = _latlon(x, y)
            return lat, lon

        lat, lon = at(bx + 0.5 * (V_TUNNEL[0] + V_TUNNEL[1]))
        feats.append(TruthFeature("tunnel", lat, lon, {"length_m": V_TUNNEL[1] - V_TUNNEL[0]}))
        lat, lon = at(bx + V_BRIDGE[1])  # bridges are located at their end
        feats.append(TruthFeature("bridge", lat, lon, {"length_m": V_BRIDGE[1] - V_BRIDGE[0]}))
        lat, lon = at(bx + 0.5 * (V_BUMP[0] + V_BUMP[1]))
        feats.append(TruthFeature("bump", lat, lon))
        lat, lon = at(bx + 0.5 * (V_CATSEYE[0] + V_CATSEYE[1]))
        feats.append(TruthFeature("cats_eye", lat, lon))
        lat, lon = at(bx + 0.5 * (V_RAILWAY[0] + V_RAILWAY[1]))
        feats.append(TruthFeature("railway_crossing", lat, lon, {"length_m": V_RAILWAY[1] - V_RAILWAY[0]}))
        lat, lon = at(bx + V_ROUNDABOUT_S)
        feats.append(TruthFeature("roundabout", lat, lon))
        lat, lon = at(bx + V_CORNER1_S)
        feats.append(TruthFeature("intersection_turn", lat, lon))
        lat, lon = _latlon(bx + V_CORNER1_S, by + 60.0)
        feats.append(TruthFeature("stop_sign", lat, lon))
        lat, lon = _latlon(bx + V_CORNER1_S, by + 100.0)
        feats.append(TruthFeature("traffic_light", lat, lon))
    return feats


def _ped_truth_features():
    feats = []
    for k in range(N_BLOCKS):
        s0 = k * P_BLOCK_S

        def at(route_s_pair, route):
            mid = s0 + 0.5 * (route_s_pair[0] + route_s_pair[1])
            x, y = route.position(mid)
            return _latlon(x, y)

        route = _PED_ROUTE
        lat, lon = at(P_UNDERPASS, route)
        feats.append(TruthFeature("underpass", lat, lon, {"length_m": P_UNDERPASS[1] - P_UNDERPASS[0]}))
        lat, lon = at(P_STAIRS, route)
        n_steps = int(round((P_STAIRS[1] - P_STAIRS[0]) / P_STAIRS_SPEED * STAIRS_OSC_HZ))
        direction = "up" if k % 2 == 0 else "down"
        feats.append(TruthFeature("stairs", lat, lon, {"step_count": n_steps, "direction": direction}))
        lat, lon = at(P_ESCALATOR, route)
        feats.append(TruthFeature("escalator", lat, lon))
        lat, lon = at((P_FB_UP[0], P_FB_DOWN[1]), route)
        feats.append(TruthFeature("footbridge", lat, lon, {"step_count": n_steps, "height_m": round(n_steps * 0.17, 2)}))
        cx, _ = route.position(s0 + P_CROSSING[0])
        lat, lon = _latlon(cx, PED_Y)
        feats.append(TruthFeature("crosswalk", lat, lon, {"lane_count": 2, "crossing_length_m": 2.0 * P_ROAD_HALF}))
    return feats


_VEH_ROUTE = _Route.from_vertices(*_vehicle_vertices())
_PED_ROUTE = _Route.from_vertices(*_ped_vertices(), smooth_m=2.0)


# ---------------------------------------------------------------------------
# Agent simulation

def _round(a, nd):
    return np.round(np.asarray(a, dtype=float), nd)


def _simulate_vehicle(agent_id, rate_hz, slows_at_lights, rng, t0_ms):
    route = _VEH_ROUTE

    zones = []
    for k in range(N_BLOCKS):
        s0 = V_LEAD_IN + k * V_BLOCK_S
        for c in (s0 + V_CORNER1_S, s0 + V_BLOCK_S):
            zones.append([(c - 27, V_SPEED), (c - 12, V_TURN_SPEED), (c + 12, V_TURN_SPEED), (c + 27, V_SPEED)])
        n = s0 + V_STOP_S
        zones.append([(n - 25, V_SPEED), (n - 1.5, V_STOP_SPEED), (n + 1.5, V_STOP_SPEED), (n + 25, V_SPEED)])
        if slows_at_lights:
            n = s0 + V_LIGHT_S
            zones.append([(n - 25, V_SPEED), (n - 1.5, V_LIGHT_SPEED), (n + 1.5, V_LIGHT_SPEED), (n + 25, V_SPEED)])
    v_grid = _speed_profile(route.s_grid, V_SPEED, zones)
    t_grid = _time_of_station(route.s_grid, v_grid)

    n = int(t_grid[-1] * rate_hz)
    t_rel = np.arange(n) / rate_hz
    s = np.interp(t_rel, t_grid, route.s_grid)
    x, y = route.position(s)
    bearing = route.bearing(s)

    # azimuth wiggle through each roundabout (enter, loop, exit straight)
    theta = bearing.copy()
    for k in range(N_BLOCKS):
        c = V_LEAD_IN + k * V_BLOCK_S + V_ROUNDABOUT_S
        sel = _in(s, c - V_ROUNDABOUT_HALF, c + V_ROUNDABOUT_HALF)
        u = (s[sel] - (c - V_ROUNDABOUT_HALF)) / (2.0 * V_ROUNDABOUT_HALF)
        theta[sel] += math.radians(60.0) * np.sin(2.0 * math.pi * u)

    gx = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2)
    gy = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2)
    gz = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2) + GRAVITY
    ax = rng.normal(0.0, ACCEL_NOISE, n)
    ay = rng.normal(0.0, ACCEL_NOISE, n)
    az = rng.normal(0.0, ACCEL_NOISE, n) + GRAVITY
    bx_burst = np.zeros(n)
    rss_extra = np.zeros(n)

    for k in range(N_BLOCKS):
        s0 = V_LEAD_IN + k * V_BLOCK_S
        sel = _in(s, s0 + V_TUNNEL[0], s0 + V_TUNNEL[1])
        bx_burst[sel] += rng.normal(0.0, TUNNEL_MAGNET_SIGMA, int(sel.sum()))
        rss_extra[sel] += TUNNEL_RSS_DROP
        sel = _in(s, s0 + V_BRIDGE[0], s0 + V_BRIDGE[1])
        u = (s[sel] - (s0 + V_BRIDGE[0])) / (V_BRIDGE[1] - V_BRIDGE[0])
        gy[sel] += BRIDGE_GRAVITY_AMP * np.sin(2.0 * math.pi * u)
        sel = _in(s, s0 + V_BUMP[0], s0 + V_BUMP[1])
        m = int(sel.sum())
        gy[sel] += rng.uniform(-BUMP_GRAVITY_HALF, BUMP_GRAVITY_HALF, m)
        gz[sel] += rng.uniform(-BUMP_GRAVITY_HALF, BUMP_GRAVITY_HALF, m)
        sel = _in(s, s0 + V_CATSEYE[0], s0 + V_CATSEYE[1])
        ax[sel] += rng.normal(0.0, CATSEYE_ACCEL_SIGMA, int(sel.sum()))
        sel = _in(s, s0 + V_RAILWAY[0], s0 + V_RAILWAY[1])
        m = int(sel.sum())
        gy[sel] += rng.uniform(-RAILWAY_GRAVITY_HALF, RAILWAY_GRAVITY_HALF, m)
        gz[sel] += rng.uniform(-RAILWAY_GRAVITY_HALF, RAILWAY_GRAVITY_HALF, m)

    samples = _assemble_samples(
        agent_id, rate_hz, rng, t0_ms, t_rel, x, y, theta,
        g_mot=np.column_stack([gx, gy, gz]),
        a_mot=np.column_stack([ax, ay, az]),
        burst_mot=np.column_stack([bx_burst, np.zeros(n), np.zeros(n)]),
        rss_extra=rss_extra,
        acc_range=(3.0, 6.0),
    )

    spans = _vehicle_spans(agent_id, t_grid, route, t0_ms)
    return Trace(agent_id, tuple(samples)), spans


def _vehicle_spans(agent_id, t_grid, route, t0_ms):
    def t_at(station):
        return t0_ms + int(1000.0 * np.interp(station, route.s_grid, t_grid))

    spans = []

    def add(kind, s_a, s_b, loc_s, loc_y=None):
        bx, by = _vehicle_block_origin(k)
        if loc_y is None:
            lat, lon = _latlon(bx + loc_s, by)
        else:
            lat, lon = _latlon(bx + V_CORNER1_S, by + loc_y)
        s0 = V_LEAD_IN + k * V_BLOCK_S
        spans.append(TruthSpan(agent_id, kind, lat, lon, t_at(s0 + s_a), t_at(s0 + s_b)))

    for k in range(N_BLOCKS):
        add("tunnel", V_TUNNEL[0], V_TUNNEL[1], 0.5 * (V_TUNNEL[0] + V_TUNNEL[1]))
        add("bridge", V_BRIDGE[0], V_BRIDGE[1], V_BRIDGE[1])
        add("bump", V_BUMP[0] - 2, V_BUMP[1] + 2, 0.5 * (V_BUMP[0] + V_BUMP[1]))
        add("cats_eye", V_CATSEYE[0] - 2, V_CATSEYE[1] + 2, 0.5 * (V_CATSEYE[0] + V_CATSEYE[1]))
        add("railway_crossing", V_RAILWAY[0], V_RAILWAY[1], 0.5 * (V_RAILWAY[0] + V_RAILWAY[1]))
        add("roundabout", V_ROUNDABOUT_S - 20, V_ROUNDABOUT_S + 20, V_ROUNDABOUT_S)
        add("intersection_turn", V_CORNER1_S - 25, V_CORNER1_S + 25, V_CORNER1_S)
        add("stop_sign", V_STOP_S - 25, V_STOP_S + 25, None, 60.0)
        add("traffic_light", V_LIGHT_S - 25, V_LIGHT_S + 25, None, 100.0)
    return spans


def _simulate_pedestrian(agent_id, rate_hz, rng, t0_ms):
    route = _PED_ROUTE

    zones = []
    for k in range(N_BLOCKS):
        s0 = k * P_BLOCK_S
        for a, b, vz in (
            (P_STAIRS[0], P_STAIRS[1], P_STAIRS_SPEED),
            (P_ESCALATOR[0], P_ESCALATOR[1], P_ESCALATOR_SPEED),
            (P_FB_UP[0], P_FB_UP[1], P_STAIRS_SPEED),
            (P_FB_DOWN[0], P_FB_DOWN[1], P_STAIRS_SPEED),
        ):
            zones.append([(s0 + a - 2, P_WALK_SPEED), (s0 + a, vz), (s0 + b, vz), (s0 + b + 2, P_WALK_SPEED)])
    v_grid = _speed_profile(route.s_grid, P_WALK_SPEED, zones)
    t_grid = _time_of_station(route.s_grid, v_grid)

    n = int(t_grid[-1] * rate_hz)
    t_rel = np.arange(n) / rate_hz
    s = np.interp(t_rel, t_grid, route.s_grid)
    x, y = route.position(s)
    theta = route.bearing(s).copy()

    # stepping oscillation: amplitude and frequency vary by zone
    amp = np.full(n, WALK_OSC_AMP)
    freq = np.full(n, WALK_OSC_HZ)
    bx_burst = np.zeros(n)
    by_burst = np.zeros(n)
    rss_extra = np.zeros(n)
    for k in range(N_BLOCKS):
        s0 = k * P_BLOCK_S
        sel = _in(s, s0 + P_UNDERPASS[0], s0 + P_UNDERPASS[1])
        m = int(sel.sum())
        bx_burst[sel] += rng.normal(0.0, PED_MAGNET_SIGMA, m)
        by_burst[sel] += rng.normal(0.0, PED_MAGNET_SIGMA, m)
        rss_extra[sel] += UNDERPASS_RSS_DROP
        down_first = k % 2 == 1
        sel = _in(s, s0 + P_STAIRS[0], s0 + P_STAIRS[1])
        amp[sel] = STAIRS_DOWN_AMP if down_first else WALK_OSC_AMP
        freq[sel] = STAIRS_OSC_HZ
        sel = _in(s, s0 + P_ESCALATOR[0], s0 + P_ESCALATOR[1])
        amp[sel] = 0.0
        m = int(sel.sum())
        bx_burst[sel] += rng.normal(0.0, PED_MAGNET_SIGMA, m)
        by_burst[sel] += rng.normal(0.0, PED_MAGNET_SIGMA, m)
        sel = _in(s, s0 + P_FB_UP[0], s0 + P_FB_UP[1])
        freq[sel] = STAIRS_OSC_HZ
        sel = _in(s, s0 + P_FB_DOWN[0], s0 + P_FB_DOWN[1])
        amp[sel] = STAIRS_DOWN_AMP
        freq[sel] = STAIRS_OSC_HZ

    phase = 2.0 * math.pi * np.cumsum(freq) / rate_hz
    osc = amp * np.sin(phase)

    gx = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2)
    gy = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2)
    gz = rng.normal(0.0, GRAVITY_NOISE, n).clip(-0.2, 0.2) + GRAVITY
    ax = rng.normal(0.0, ACCEL_NOISE, n)
    ay = rng.normal(0.0, ACCEL_NOISE, n)
    az = rng.normal(0.0, ACCEL_NOISE, n) + GRAVITY + osc

    samples = _assemble_samples(
        agent_id, rate_hz, rng, t0_ms, t_rel, x, y, theta,
        g_mot=np.column_stack([gx, gy, gz]),
        a_mot=np.column_stack([ax, ay, az]),
        burst_mot=np.column_stack([bx_burst, by_burst, np.zeros(n)]),
        rss_extra=rss_extra,
        acc_range=(1.5, 3.0),
    )

    spans = _ped_spans(agent_id, t_grid, route, t0_ms)
    return Trace(agent_id, tuple(samples)), spans


def _ped_spans(agent_id, t_grid, route, t0_ms):
    def t_at(station):
        return t0_ms + int(1000.0 * np.interp(station, route.s_grid, t_grid))

    spans = []
    for k in range(N_BLOCKS):
        s0 = k * P_BLOCK_S

        def add(kind, a, b):
            mid = s0 + 0.5 * (a + b)
            xx, yy = route.position(mid)
            lat, lon = _latlon(xx, yy)
            spans.append(TruthSpan(agent_id, kind, lat, lon, t_at(s0 + a), t_at(s0 + b)))

        add("underpass", P_UNDERPASS[0], P_UNDERPASS[1])
        add("stairs", P_STAIRS[0], P_STAIRS[1])
        add("escalator", P_ESCALATOR[0], P_ESCALATOR[1])
        add("footbridge", P_FB_UP[0], P_FB_DOWN[1])
        cx, _ = route.position(s0 + P_CROSSING[0])
        lat, lon = _latlon(cx, PED_Y)
        spans.append(TruthSpan(agent_id, "crosswalk", lat, lon, t_at(s0 + P_CROSSING[0]), t_at(s0 + P_CROSSING[1])))
    return spans


def _assemble_samples(agent_id, rate_hz, rng, t0_ms, t_rel, x, y, theta, *, g_mot, a_mot, burst_mot, rss_extra, acc_range):
    n = len(t_rel)
    q = _random_mount(rng)          # device -> ENU rotation

    c, sn = np.cos(theta), np.sin(theta)

    def to_enu(v):                  # inverse spin: motion -> ENU
        out = np.empty_like(v)
        out[:, 0] = c * v[:, 0] + sn * v[:, 1]
        out[:, 1] = -sn * v[:, 0] + c * v[:, 1]
        out[:, 2] = v[:, 2]
        return out

    g_dev = _round(to_enu(g_mot) @ q, 4)
    a_dev = _round(to_enu(a_mot) @ q, 4)
    m_enu = to_enu(burst_mot) + np.array(B_ENU)
    m_dev = _round(m_enu @ q + rng.normal(0.0, MAGNET_NOISE, (n, 3)), 4)
    azimuth = _round(theta + rng.normal(0.0, AZIMUTH_NOISE, n), 5)

    gyro_z_enu = np.concatenate([[0.0], np.diff(theta)]) * rate_hz
    gyro_dev = _round(np.column_stack([np.zeros(n), np.zeros(n), gyro_z_enu]) @ q
                      + rng.normal(0.0, 0.01, (n, 3)), 4)

    t_ms = t0_ms + np.round(t_rel * 1000.0).astype(np.int64)

    fix_every = int(rate_hz)
    is_fix = np.arange(n) % fix_every == 0
    acc = np.full(n, np.nan)
    lat = np.full(n, np.nan)
    lon = np.full(n, np.nan)
    rss = np.full(n, np.nan)
    idx = np.where(is_fix)[0]
    acc_f = rng.uniform(acc_range[0], acc_range[1], len(idx))
    noise_x = rng.normal(0.0, acc_f / 2.0)
    noise_y = rng.normal(0.0, acc_f / 2.0)
    lat_f, lon_f = _latlon(np.asarray(x)[idx] + noise_x, np.asarray(y)[idx] + noise_y)
    acc[idx] = _round(acc_f, 2)
    lat[idx] = _round(lat_f, 7)
    lon[idx] = _round(lon_f, 7)
    wander = 2.0 * np.sin(2.0 * math.pi * t_rel[idx] / 90.0)
    rss[idx] = _round(
        np.clip(RSS_BASE_DBM + wander + rss_extra[idx] + rng.normal(0.0, RSS_NOISE, len(idx)), -139.0, -21.0), 1
    )

    a_l = a_dev.tolist()
    gy_l = gyro_dev.tolist()
    m_l = m_dev.tolist()
    g_l = g_dev.tolist()
    az_l = azimuth.tolist()
    samples = []
    for i in range(n):
        has_fix = not np.isnan(acc[i])
        samples.append(
            SensorSample(
                timestamp_ms=int(t_ms[i]),
                accel=tuple(a_l[i]),
                gyro=tuple(gy_l[i]),
                magnet=tuple(m_l[i]),
                gravity=tuple(g_l[i]),
                orientation=(az_l[i], 0.0, 0.0),
                serving_cell="cell-1" if has_fix else None,
                serving_rss_dbm=float(rss[i]) if not np.isnan(rss[i]) else None,
                lat_deg=float(lat[i]) if has_fix else None,
                lon_deg=float(lon[i]) if has_fix else None,
                loc_accuracy_m=float(acc[i]) if has_fix else None,
            )
        )
    return samples


# ---------------------------------------------------------------------------
# Public entry points

def simulate_benchmark(seed: int = 0):
    """Generate the benchmark traces, network, and ground truth.

    Returns (traces, network, truth).  Fully determined by the seed.
    """
    if not isinstance(seed, int) or seed < 0:
        raise InvalidScenario(f"seed must be a non-negative integer, got {seed!r}")
    net = build_network()
    ss = np.random.SeedSequence(seed)
    children = ss.spawn(len(VEHICLE_AGENTS) + len(PED_AGENTS))

    traces = []
    spans: list[TruthSpan] = []
    for i, (agent_id, rate) in enumerate(VEHICLE_AGENTS):
        rng = np.random.default_rng(children[i])
        t0 = SIM_T0_MS + i * 3_600_000
        tr, sp = _simulate_vehicle(agent_id, rate, slows_at_lights=(i % 2 == 0), rng=rng, t0_ms=t0)
        traces.append(tr)
        spans.extend(sp)
    for j, (agent_id, rate) in enumerate(PED_AGENTS):
        rng = np.random.default_rng(children[len(VEHICLE_AGENTS) + j])
        t0 = SIM_T0_MS + (len(VEHICLE_AGENTS) + j) * 3_600_000
        tr, sp = _simulate_pedestrian(agent_id, rate, rng=rng, t0_ms=t0)
        traces.append(tr)
        spans.extend(sp)

    features = _vehicle_truth_features() + _ped_truth_features()
    truth = GroundTruth(features=features, spans=spans, network_length_m=network_length_m(net))
    return traces, net, truth


def simulate_to_dir(out_dir, seed: int = 0, scenario: str = "benchmark"):
    """Write traces.jsonl, network.json, and truth.json under out_dir."""
    import os

    from .trace import write_network_json, write_traces_jsonl

    if scenario != "benchmark":
        raise InvalidScenario(f"unknown scenario {scenario!r} (available: benchmark)")
    os.makedirs(out_dir, exist_ok=True)
    traces, net, truth = simulate_benchmark(seed)
    write_traces_jsonl(traces, os.path.join(out_dir, "traces.jsonl"))
    write_network_json(net, os.path.join(out_dir, "network.json"))
    write_truth_json(truth, os.path.join(out_dir, "truth.json"))
    return traces, net, truth
