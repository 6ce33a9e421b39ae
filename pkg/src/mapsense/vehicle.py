"""Vehicle semantic extraction.

Anomalous window runs feed a fixed decision tree (tunnel, bridge, bump,
cat's eye, railway crossing); heading excursions at junctions yield
roundabouts and intersection turns; multi-trace slowdown statistics yield
stop signs and traffic lights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import AbstainMissingChannel, InsufficientTraces
from .geo import haversine_m, local_xy
from .preprocess import WindowFeatures

TUNNEL = "tunnel"
BRIDGE = "bridge"
BUMP = "bump"
CATS_EYE = "cats_eye"
RAILWAY = "railway_crossing"
ROUNDABOUT = "roundabout"
INTERSECTION_TURN = "intersection_turn"
TURN = "turn"
CURVE = "curve"


@dataclass
class VehicleBaselines:
    """Per-segment smooth-road baselines (medians over all windows)."""

    var_gy: float
    var_gz: float
    var_mx: float
    var_my: float
    var_ax: float

    @property
    def gy_std(self):
        return math.sqrt(self.var_gy)


def compute_vehicle_baselines(windows: list[WindowFeatures]) -> VehicleBaselines:
    def med(vals, floor=1e-12):
        vals = [v for v in vals if v is not None]
        return max(float(np.median(vals)), floor) if vals else floor

    return VehicleBaselines(
        var_gy=med([w.var_gravity_y for w in windows]),
        var_gz=med([w.var_gravity_z for w in windows]),
        var_mx=med([w.var_magnet_x for w in windows]),
        var_my=med([w.var_magnet_y for w in windows]),
        var_ax=med([w.var_accel[0] for w in windows]),
    )


def find_event_runs(windows: list[WindowFeatures], base: VehicleBaselines, cfg: PipelineConfig):
    """Group contiguous anomalous windows into candidate event runs."""
    flags = []
    for w in windows:
        anomalous = False
        if w.rss_delta_db is not None and w.rss_delta_db < cfg.rss_drop_db:
            anomalous = True
        if w.var_magnet_x is not None and w.var_magnet_x >= cfg.magnet_high_ratio * base.var_mx:
            anomalous = True
        if w.var_gravity_y >= cfg.anomaly_ratio * base.var_gy:
            anomalous = True
        if w.var_gravity_z >= cfg.anomaly_ratio * base.var_gz:
            anomalous = True
        if w.var_accel[0] >= cfg.anomaly_ratio * base.var_ax:
            anomalous = True
        flags.append(anomalous)
    runs = []
    start = None
    for i, f in enumerate(flags):
        if f and start is None:
            start = i
        elif not f and start is not None:
            runs.append((start, i - 1))
            start = None
    if start is not None:
        runs.append((start, len(flags) - 1))
    return runs


def _stitch_profile(windows, w_lo, w_hi):
    """Merge overlapping per-window (offset, gravity_y) profiles into one."""
    parts = [windows[i].gravity_y_profile for i in range(w_lo, w_hi + 1)]
    allp = np.vstack([p for p in parts if len(p)])
    offsets, order = np.unique(allp[:, 0], return_index=True)
    gy = allp[order, 1]
    # approximate a time for each profile row by linear spread over the run
    t0 = windows[w_lo].t_start_ms
    t1 = windows[w_hi].t_end_ms
    if offsets[-1] > offsets[0]:
        frac = (offsets - offsets[0]) / (offsets[-1] - offsets[0])
    else:
        frac = np.zeros_like(offsets)
    t = t0 + frac * (t1 - t0)
    return t, offsets, gy


def _event_extent(offsets, deviations, sigma):
    """Distance extent over which any channel's local RMS exceeds baseline.

    A short rolling RMS of the centred signal is compared against 2.2x the
    baseline std, which stays sensitive to sustained low-amplitude shaking
    while single-sample noise outliers average away.
    """
    n = len(offsets)
    k = min(9, n)
    exceed = np.zeros(n, dtype=bool)
    for dev, s in zip(deviations, sigma):
        if dev is None or len(dev) < 2:
            continue
        sq = np.square(dev - np.median(dev))
        rms = np.sqrt(np.convolve(sq, np.ones(k) / k, mode="same"))
        exceed |= rms > 2.2 * max(s, 1e-9)
    if not np.any(exceed):
        # no gravity excursion at all: the event is point-like (if real)
        return None, None, 0.0
    i = np.where(exceed)[0]
    return int(i[0]), int(i[-1]), float(offsets[i[-1]] - offsets[i[0]])


def _up_then_down(offsets, gy, cfg: PipelineConfig, base_std):
    """Shape test: a positive lobe followed by a negative lobe."""
    g = gy - np.mean(gy)
    if len(g) < 8:
        return False
    k = max(3, len(g) // 50)
    g = np.convolve(g, np.ones(k) / k, mode="same")
    prom = cfg.updown_prominence * max(base_std, 1e-9)
    imax = int(np.argmax(g))
    imin = int(np.argmin(g))
    if g[imax] < prom or -g[imin] < prom or imax >= imin:
        return False
    span = offsets[-1] - offsets[0]
    if span <= 0:
        return False
    pos = g > 0
    lo = imax
    while lo > 0 and pos[lo - 1]:
        lo -= 1
    hi = imax
    while hi < len(g) - 1 and pos[hi + 1]:
        hi += 1
    pos_frac = (offsets[hi] - offsets[lo]) / span
    lo = imin
    while lo > 0 and not pos[lo - 1]:
        lo -= 1
    hi = imin
    while hi < len(g) - 1 and not pos[hi + 1]:
        hi += 1
    neg_frac = (offsets[hi] - offsets[lo]) / span
    return pos_frac >= cfg.updown_lobe_frac and neg_frac >= cfg.updown_lobe_frac


@dataclass
class VehicleEvent:
    kind: str
    t_start_ms: int
    t_end_ms: int
    span_length_m: float
    # bridges are located at their end; the start rides along
    t_feature_ms: int = 0
    t_other_end_ms: int = 0


def classify_veh_event(
    windows: list[WindowFeatures], w_lo: int, w_hi: int, base: VehicleBaselines, cfg: PipelineConfig | None = None
) -> VehicleEvent | None:
    """Classify one anomalous run of windows; None when nothing fits.

    Tree order: tunnel (RSS drop + X-only magnet variance), bridge (long
    up-then-down gravity profile), short-span bump vs cat's eye, then the
    medium railway band.
    """
    cfg = cfg or PipelineConfig()
    run = windows[w_lo : w_hi + 1]
    if any(w.var_magnet_x is None for w in run):
        raise AbstainMissingChannel("vehicle tree needs the magnetometer")

    rss_vals = [w.rss_delta_db for w in run if w.rss_delta_db is not None]
    min_rss = min(rss_vals) if rss_vals else 0.0
    r_mx = max(w.var_magnet_x / base.var_mx for w in run)
    r_my = max(w.var_magnet_y / base.var_my for w in run)
    r_gy = max(w.var_gravity_y / base.var_gy for w in run)
    r_gz = max(w.var_gravity_z / base.var_gz for w in run)
    r_ax = max(w.var_accel[0] / base.var_ax for w in run)

    t, offsets, gy = _stitch_profile(windows, w_lo, w_hi)
    i0, i1, span_m = _event_extent(offsets, [gy], [base.gy_std])
    t_run0 = int(run[0].t_start_ms)
    t_run1 = int(run[-1].t_end_ms)
    if i0 is not None:
        t_ev0, t_ev1 = int(t[i0]), int(t[i1])
    else:
        t_ev0, t_ev1 = t_run0, t_run1

    # (1) tunnel: signal drop with X-only magnetic disturbance
    if min_rss < cfg.rss_drop_db and r_mx >= cfg.magnet_high_ratio and r_my <= cfg.magnet_low_ratio:
        return VehicleEvent(TUNNEL, t_run0, t_run1, span_m if i0 is not None else 0.0)

    # (2) bridge: up-then-down gravity over a long distance, located at its end
    if i0 is not None and span_m >= cfg.bridge_min_m and _up_then_down(offsets, gy, cfg, base.gy_std):
        return VehicleEvent(BRIDGE, t_ev0, t_ev1, span_m, t_feature_ms=t_ev1, t_other_end_ms=t_ev0)

    # (3) short span: bump vs cat's eye
    if span_m < cfg.short_max_m:
        if r_gy >= cfg.bump_ratio and r_gz >= cfg.bump_ratio:
            return VehicleEvent(BUMP, t_ev0, t_ev1, span_m)
        if r_gy < cfg.railway_ratio and r_gz < cfg.railway_ratio and r_ax >= cfg.catseye_x_ratio:
            return VehicleEvent(CATS_EYE, t_ev0, t_ev1, span_m)
        return None

    # (4) medium span with medium Y/Z variance: railway crossing
    if (
        cfg.railway_min_m <= span_m <= cfg.railway_max_m
        and cfg.railway_ratio <= r_gy < cfg.bump_ratio
        and cfg.railway_ratio <= r_gz < cfg.bump_ratio
    ):
        return VehicleEvent(RAILWAY, t_ev0, t_ev1, span_m)
    return None


# ---------------------------------------------------------------------------
# Heading features (turns, curves, roundabouts)

def classify_heading_feature(t_s, heading_rad, at_junction=False, cfg: PipelineConfig | None = None) -> str | None:
    """Classify one heading excursion span.

    A sustained ~90 degree net change is a turn (an intersection turn at a
    mapped junction); a transient excursion returning to the original
    direction is a curve, or a roundabout when the excursion is large and
    happens at a junction.
    """
    cfg = cfg or PipelineConfig()
    h = np.unwrap(np.asarray(heading_rad, dtype=float))
    if len(h) < 3:
        return None
    net = math.degrees(h[-1] - h[0])
    excursion = math.degrees(float(np.max(np.abs(h - h[0]))))
    tol = cfg.turn_net_tol_deg

    near_zero = abs(net) < tol
    near_turn = any(abs(abs(net) - a) <= tol for a in (90.0, 270.0))

    if near_zero and excursion >= cfg.roundabout_excursion_deg and at_junction:
        return ROUNDABOUT
    if near_turn and excursion >= abs(net) + cfg.roundabout_excursion_deg:
        return ROUNDABOUT  # turn-and-curve composite exit
    if near_turn:
        return INTERSECTION_TURN if at_junction else TURN
    if near_zero and excursion >= cfg.curve_excursion_deg:
        return CURVE
    return None


def find_heading_spans(t_ms, heading_rad, cfg: PipelineConfig | None = None):
    """Index spans where the heading rate is sustained above threshold.

    Spans separated by less than 3 s merge; each span is extended by 2.5 s
    of context on both sides so the net change settles.
    """
    cfg = cfg or PipelineConfig()
    t = np.asarray(t_ms, dtype=np.int64)
    h = np.unwrap(np.asarray(heading_rad, dtype=float))
    if len(t) < 5:
        return []
    dt = np.maximum(np.diff(t) / 1000.0, 1e-6)
    rate = np.diff(h) / dt
    k = max(3, int(round(0.5 / max(float(np.median(dt)), 1e-3))))
    rate = np.convolve(rate, np.ones(k) / k, mode="same")
    active = np.abs(rate) > cfg.heading_rate_rad_s
    spans = []
    start = None
    for i, a in enumerate(active):
        if a and start is None:
            start = i
        elif not a and start is not None:
            spans.append([start, i])
            start = None
    if start is not None:
        spans.append([start, len(active)])
    merged = []
    for s in spans:
        if merged and (t[s[0]] - t[merged[-1][1]]) < 3000:
            merged[-1][1] = s[1]
        else:
            merged.append(s)
    out = []
    pad = 2500
    for s in merged:
        i0 = int(np.searchsorted(t, t[s[0]] - pad))
        i1 = int(np.searchsorted(t, min(t[-1], t[min(s[1], len(t) - 1)] + pad), side="right"))
        out.append((i0, max(i1 - 1, i0 + 1)))
    return out


# ---------------------------------------------------------------------------
# Stop signs and traffic lights

@dataclass(frozen=True)
class ApproachObservation:
    """One trace passing an intersection from one direction."""

    intersection: str
    approach: str            # neighbor node the trace came from
    slowed: bool
    t_ms: int
    lat: float               # regulator anchor: offset from the node
    lon: float
    trace_id: str | None = None


def _sustained_slowdown(t_ms, speed, threshold_mps, min_s):
    """True when speed stays below the threshold for at least ``min_s``.

    A momentary dip in the smoothed speed estimate is location noise; a
    genuine stop or crawl holds the low speed for a while.
    """
    below = np.asarray(speed) < threshold_mps
    t = np.asarray(t_ms, dtype=np.int64)
    start = None
    for i, b in enumerate(below):
        if b and start is None:
            start = i
        elif not b and start is not None:
            if (t[i - 1] - t[start]) >= min_s * 1000.0:
                return True
            start = None
    if start is not None and (t[-1] - t[start]) >= min_s * 1000.0:
        return True
    return False


def observe_approaches(fixes, net, cfg: PipelineConfig | None = None, trace_id=None) -> list[ApproachObservation]:
    """Detect intersection passes in one trace and whether each one slowed.

    A pass is a contiguous stretch of fixes within the approach radius of a
    mapped intersection; it slowed when the smoothed speed stays below the
    slowdown threshold for a sustained stretch.  The approach is the
    neighbor node whose direction best matches where the trace came from.
    """
    cfg = cfg or PipelineConfig()
    if len(fixes) < 2 or not net.intersections:
        return []
    neighbors: dict[str, list[str]] = {}
    for a, b in net.road_edges():
        neighbors.setdefault(a, []).append(b)
        neighbors.setdefault(b, []).append(a)

    out = []
    for node in net.intersections:
        nlat, nlon = net.nodes[node]
        fx, fy = local_xy((nlat, nlon), fixes.lat, fixes.lon)
        dist = np.hypot(fx, fy)
        within = dist <= cfg.approach_radius_m
        if not np.any(within):
            continue
        edges_w = np.flatnonzero(np.diff(within.astype(np.int8)))
        starts = [int(i) + 1 for i in edges_w if not within[i]]
        if within[0]:
            starts.insert(0, 0)
        ends = [int(i) for i in edges_w if within[i]]
        if within[-1]:
            ends.append(len(within) - 1)
        # jittery boundary fixes split one physical pass in two; re-merge
        passes = []
        for i0, i1 in zip(starts, ends):
            if passes and (fixes.t_ms[i0] - fixes.t_ms[passes[-1][1]]) < 10_000:
                passes[-1] = (passes[-1][0], i1)
            else:
                passes.append((i0, i1))
        for i0, i1 in passes:
            slowed = _sustained_slowdown(
                fixes.t_ms[i0 : i1 + 1],
                fixes.speed[i0 : i1 + 1],
                cfg.slowdown_speed_mps,
                cfg.slowdown_min_s,
            )
            i_close = i0 + int(np.argmin(dist[i0 : i1 + 1]))
            # direction the trace came from, seen from the node
            ex, ey = fx[i0], fy[i0]
            if math.hypot(ex, ey) < 1e-6:
                ex, ey = -(fx[i1] - fx[i0]), -(fy[i1] - fy[i0])
            best_nb, best_cos = None, -2.0
            for nb in neighbors.get(node, []):
                bx, by = local_xy((nlat, nlon), np.array([net.nodes[nb][0]]), np.array([net.nodes[nb][1]]))
                norm = math.hypot(bx[0], by[0]) * max(math.hypot(ex, ey), 1e-9)
                cosv = (bx[0] * ex + by[0] * ey) / max(norm, 1e-9)
                if cosv > best_cos:
                    best_nb, best_cos = nb, cosv
            if best_nb is None:
                continue
            blat, blon = net.nodes[best_nb]
            d = max(1e-9, haversine_m((nlat, nlon), (blat, blon)))
            frac = min(1.0, cfg.regulator_offset_m / d)
            alat = nlat + frac * (blat - nlat)
            alon = nlon + frac * (blon - nlon)
            out.append(
                ApproachObservation(
                    intersection=node,
                    approach=best_nb,
                    slowed=slowed,
                    t_ms=int(fixes.t_ms[i_close]),
                    lat=float(alat),
                    lon=float(alon),
                    trace_id=trace_id,
                )
            )
    return out


@dataclass
class ApproachStats:
    """Slowdown statistics for one incoming direction of an intersection."""

    intersection: str
    approach: str            # incoming edge id, e.g. "nodeA->nodeB"
    n_traces: int = 0
    n_slowdown: int = 0
    trace_ids: list = field(default_factory=list)

    def add(self, slowed: bool, trace_id=None):
        self.n_traces += 1
        if slowed:
            self.n_slowdown += 1
        if trace_id is not None:
            self.trace_ids.append(trace_id)

    @property
    def ratio(self):
        return self.n_slowdown / self.n_traces if self.n_traces else 0.0


@dataclass
class RegulatorResult:
    intersection: str
    kind: str                # "stop_sign" | "traffic_light"
    approaches: list[ApproachStats]


def infer_regulators(stats: list[ApproachStats], cfg: PipelineConfig | None = None) -> list[RegulatorResult]:
    """Apply the 80% / 15% slowdown rules per intersection.

    An approach is a potential stop when at least 80% of its traces slow
    down, a potential light when at least 15% do (both inclusive).  An
    intersection is stop-sign regulated when all or all but one of its
    observed approaches are potential stops (the potential-stop approaches
    become stop signs); otherwise it gets a traffic light when at least
    half plus one of the approaches are potential lights.
    """
    cfg = cfg or PipelineConfig()
    by_node: dict[str, list[ApproachStats]] = {}
    for st in stats:
        by_node.setdefault(st.intersection, []).append(st)

    results = []
    any_qualified = False
    for node, approaches in sorted(by_node.items()):
        qualified = [a for a in approaches if a.n_traces >= cfg.min_traces]
        if not qualified:
            continue
        any_qualified = True
        k = len(qualified)
        potential_stop = [a for a in qualified if a.ratio >= cfg.stop_ratio]
        potential_light = [a for a in qualified if a.ratio >= cfg.light_ratio]
        if len(potential_stop) >= max(1, k - 1):
            results.append(RegulatorResult(node, "stop_sign", potential_stop))
        elif len(potential_light) >= k // 2 + 1:
            results.append(RegulatorResult(node, "traffic_light", qualified))
    if not any_qualified and stats:
        raise InsufficientTraces(
            f"no approach reaches the minimum of {cfg.min_traces} traces"
        )
    return results
