"""Pedestrian semantic extraction.

A window-level decision tree labels each sliding window as stationary,
walking, escalator, stairs, or underpass interior; composite patterns over
the label sequence then yield footbridges, underpasses, standalone stairs
and escalators, and crosswalks (with road width, hence lane counts).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import PipelineConfig
from .errors import AbstainMissingChannel
from .geo import haversine_m, heading_between, local_xy, segments_intersect, wrap_angle
from .preprocess import WindowFeatures
from .segmentation import Fixes, accuracy_at, location_at
from .semantics import Detection, detection_weight
from .trace import RoadNetwork

STATIONARY = "stationary"
WALKING = "walking"
ESCALATOR = "escalator"
STAIRS_UP = "stairs-up"
STAIRS_DOWN = "stairs-down"
UNDERPASS_INTERIOR = "underpass-interior"

_STRUCTURE_STEPS = (STAIRS_UP, STAIRS_DOWN, ESCALATOR)


@dataclass
class PedBaselines:
    """Per-segment walking references for the ratio thresholds."""

    walking_accel_var: float     # median vertical accel variance while stepping
    magnet_var: float            # median magnet variance (max of x/y) over the segment
    steps_per_m: float           # walking steps-per-meter baseline
    step_peak: float             # median walking step peak, m/s^2
    step_hz: float = 1.8         # median walking step cadence, steps/s


def compute_ped_baselines(windows: list[WindowFeatures], steps, cfg: PipelineConfig) -> PedBaselines:
    """Derive the walking baselines from the segment itself.

    Walking dominates a pedestrian segment, so medians over all windows are
    robust against the (sparse) structures we are trying to find.
    """
    if not windows:
        return PedBaselines(1.0, 1.0, 1.0, 1.0)
    accel_vars = [w.var_accel[2] for w in windows]
    walking_var = float(np.median(accel_vars))
    mag = [max(w.var_magnet_x, w.var_magnet_y) for w in windows if w.var_magnet_x is not None]
    magnet_var = float(np.median(mag)) if mag else 1.0
    step_t = np.array([t for t, _ in steps], dtype=np.int64)
    spm = []
    for w in windows:
        cnt = int(np.sum((step_t >= w.t_start_ms) & (step_t < w.t_end_ms)))
        if cnt > 0 and w.distance_m > 0.5:
            spm.append(cnt / w.distance_m)
    steps_per_m = float(np.median(spm)) if spm else 1.0
    peaks = [p for _, p in steps]
    step_peak = float(np.median(peaks)) if peaks else 1.0
    step_hz = 1.8
    if len(step_t) >= 3:
        gaps = np.diff(step_t) / 1000.0
        gaps = gaps[gaps < 2.0]  # ignore pauses between stepping stretches
        if len(gaps) > 0:
            step_hz = 1.0 / float(np.median(gaps))
    return PedBaselines(
        max(walking_var, 1e-9),
        max(magnet_var, 1e-12),
        max(steps_per_m, 1e-9),
        max(step_peak, 1e-9),
        max(step_hz, 1e-9),
    )


def classify_ped_window(
    w: WindowFeatures, steps, baselines: PedBaselines, cfg: PipelineConfig | None = None
) -> str:
    """Label one window of a pedestrian segment.

    ``steps`` is the list of (timestamp_ms, peak) step events falling in the
    window.  Raises AbstainMissingChannel when the magnetometer is absent.
    """
    cfg = cfg or PipelineConfig()
    if w.var_magnet_x is None or w.var_magnet_y is None:
        raise AbstainMissingChannel("pedestrian tree needs the magnetometer")
    magnet_high_x = w.var_magnet_x >= cfg.magnet_high_ratio * baselines.magnet_var
    magnet_high_y = w.var_magnet_y >= cfg.magnet_high_ratio * baselines.magnet_var

    if w.var_accel[2] < cfg.accel_low_ratio * baselines.walking_accel_var:
        return ESCALATOR if (magnet_high_x or magnet_high_y) else STATIONARY

    # stepping branch
    rss_drop = w.rss_delta_db is not None and w.rss_delta_db < cfg.rss_drop_db
    if rss_drop and magnet_high_x and magnet_high_y:
        return UNDERPASS_INTERIOR
    if len(steps) >= 2:
        # descending stairs: each landing impact spikes well above the
        # walking step peak, which is more reliable than the steps-per-meter
        # ratio when the smoothed location track cuts the corner
        peak = float(np.median([p for _, p in steps]))
        if peak >= cfg.stairs_peak_ratio * baselines.step_peak:
            return STAIRS_DOWN
    if w.distance_m > 0.3 and len(steps) > 0:
        spm = len(steps) / w.distance_m
        if spm >= cfg.stairs_freq_ratio * baselines.steps_per_m and _cadence_is_slow(
            steps, baselines, cfg
        ):
            return STAIRS_UP
    return WALKING


def _cadence_is_slow(steps, baselines: PedBaselines, cfg: PipelineConfig) -> bool:
    """True when the window's step cadence sits below the walking baseline.

    Climbing is paced slower than level walking; a dense window at full
    walking cadence owes its steps-per-meter ratio to location noise, not
    to a staircase.  Too few steps to judge counts as slow.
    """
    if len(steps) < 3:
        return True
    gaps = np.diff([t for t, _ in steps]) / 1000.0
    gaps = gaps[gaps < 2.0]
    if len(gaps) < 2:
        return True
    hz = 1.0 / float(np.median(gaps))
    return hz < cfg.stairs_cadence_ratio * baselines.step_hz


# ---------------------------------------------------------------------------
# Composite structures

@dataclass
class _Run:
    label: str
    w_lo: int        # first window index
    w_hi: int        # last window index (inclusive)
    t0: int
    t1: int
    consumed: bool = False


def _smooth_labels(labels):
    # single-window blips flanked by one label collapse into it
    smoothed = list(labels)
    for i in range(1, len(labels) - 1):
        if labels[i - 1] == labels[i + 1] != labels[i]:
            smoothed[i] = labels[i - 1]
    return smoothed


def _label_runs(windows, labels):
    runs = []
    for i, lab in enumerate(labels):
        if runs and runs[-1].label == lab:
            runs[-1].w_hi = i
            runs[-1].t1 = windows[i].t_end_ms
        else:
            runs.append(_Run(lab, i, i, windows[i].t_start_ms, windows[i].t_end_ms))
    return runs


_MIN_STRUCTURE_WINDOWS = 3


def _validated_runs(windows, labels, steps, baselines, cfg):
    """Label runs with noise-grade structure runs demoted back to walking.

    Window-level labels are jittery: location noise alone can push a lone
    walking window over the steps-per-meter bound.  A structure run must
    span a few windows, and a stairs run must still clear the threshold
    when its steps and distance are pooled over the whole run.
    """
    smoothed = _smooth_labels(labels)
    runs = _label_runs(windows, smoothed)
    cleaned = list(smoothed)
    for r in runs:
        if r.label not in (STAIRS_UP, STAIRS_DOWN, ESCALATOR, UNDERPASS_INTERIOR):
            continue
        demote = (r.w_hi - r.w_lo + 1) < _MIN_STRUCTURE_WINDOWS
        if not demote and r.label == STAIRS_DOWN:
            # a run whose pooled step peaks clear the impact threshold is a
            # staircase no matter what the location track says
            run_steps = _steps_in(steps, r.t0, r.t1)
            if run_steps:
                peak = float(np.median([p for _, p in run_steps]))
                if peak >= cfg.stairs_peak_ratio * baselines.step_peak:
                    continue
        if not demote and r.label in (STAIRS_UP, STAIRS_DOWN):
            dist = _span_distance(windows, r.w_lo, r.w_hi)
            run_steps = _steps_in(steps, r.t0, r.t1)
            demote = dist <= 0.5 or (len(run_steps) / dist) < cfg.stairs_freq_ratio * baselines.steps_per_m
            if not demote and len(run_steps) >= 5:
                # stairs are climbed at a slower cadence than level walking;
                # a "dense" run at full walking cadence is a location-noise
                # artifact (the smoothed path cuts corners, shrinking the
                # apparent distance), not a staircase.  The run may include
                # walking steps at its edges, so judge by the slower quartile
                # of the inter-step gaps rather than the run-wide average.
                gaps = np.diff([t for t, _ in run_steps]) / 1000.0
                gaps = gaps[gaps < 2.0]
                if len(gaps) >= 4:
                    slow_hz = 1.0 / float(np.percentile(gaps, 75))
                    demote = slow_hz >= cfg.stairs_cadence_ratio * baselines.step_hz
        if demote:
            for i in range(r.w_lo, r.w_hi + 1):
                cleaned[i] = WALKING
    return _label_runs(windows, cleaned)


def _steps_in(steps, t0, t1):
    return [(t, p) for t, p in steps if t0 <= t < t1]


def _min_rss_delta(windows, w_lo, w_hi):
    vals = [windows[i].rss_delta_db for i in range(w_lo, w_hi + 1) if windows[i].rss_delta_db is not None]
    return min(vals) if vals else 0.0


def _span_distance(windows, w_lo, w_hi):
    return sum(windows[i].distance_m for i in range(w_lo, w_hi + 1, 2))  # stride 2 skips 50% overlap


def detect_ped_structures(
    windows: list[WindowFeatures],
    labels: list[str],
    steps,
    fixes: Fixes,
    net: RoadNetwork,
    cfg: PipelineConfig | None = None,
    trace_id: str | None = None,
    baselines: PedBaselines | None = None,
) -> list[Detection]:
    """Turn a labeled window sequence into pedestrian semantic detections.

    Emits footbridge, underpass, stairs, escalator, and crosswalk records;
    crossing lengths ride along on crosswalks for later lane counting.
    """
    cfg = cfg or PipelineConfig()
    if not windows:
        return []
    if baselines is not None:
        runs = _validated_runs(windows, labels, steps, baselines, cfg)
    else:
        runs = _label_runs(windows, _smooth_labels(labels))
    detections: list[Detection] = []

    def emit(kind, t0, t1, lat=None, lon=None, attributes=None):
        if lat is None:
            lat, lon = location_at(fixes, (t0 + t1) // 2)
        detections.append(
            Detection(
                kind=kind,
                lat=lat,
                lon=lon,
                weight=detection_weight(accuracy_at(fixes, t0, t1)),
                trace_id=trace_id,
                t_start_ms=int(t0),
                t_end_ms=int(t1),
                attributes=attributes or {},
            )
        )

    # footbridge: (stairs|escalator)+ walking (stairs|escalator)+ with no RSS drop
    for i in range(len(runs) - 2):
        a, mid, b = runs[i], runs[i + 1], runs[i + 2]
        if a.consumed or b.consumed:
            continue
        if a.label in _STRUCTURE_STEPS and b.label in _STRUCTURE_STEPS and mid.label == WALKING:
            if (mid.w_hi - mid.w_lo + 1) < _MIN_STRUCTURE_WINDOWS:
                continue  # a split staircase, not a deck walked between two flights
            walk_m = _span_distance(windows, mid.w_lo, mid.w_hi)
            if walk_m > cfg.footbridge_max_walk_m:
                continue
            if _min_rss_delta(windows, a.w_lo, b.w_hi) < cfg.rss_drop_db:
                continue  # signal dropped: this pattern is an underpass, never a footbridge
            attrs = {}
            ascend = a if a.label == STAIRS_UP else (b if b.label == STAIRS_UP else None)
            if ascend is not None:
                n_steps = len(_steps_in(steps, ascend.t0, ascend.t1))
                if n_steps >= 1:
                    attrs["step_count"] = n_steps
                    attrs["height_m"] = footbridge_height_m(n_steps, cfg.step_rise_m)
            emit("footbridge", a.t0, b.t1, attributes=attrs)
            a.consumed = mid.consumed = b.consumed = True

    # underpass: interior run bounded by walking
    for i, r in enumerate(runs):
        if r.consumed or r.label != UNDERPASS_INTERIOR:
            continue
        prev_ok = i == 0 or runs[i - 1].label in (WALKING, STATIONARY)
        next_ok = i == len(runs) - 1 or runs[i + 1].label in (WALKING, STATIONARY)
        if prev_ok and next_ok:
            emit("underpass", r.t0, r.t1)
            r.consumed = True

    # leftover stairs / escalator runs stand alone
    for r in runs:
        if r.consumed:
            continue
        if r.label in (STAIRS_UP, STAIRS_DOWN):
            n_steps = len(_steps_in(steps, r.t0, r.t1))
            emit("stairs", r.t0, r.t1, attributes={"step_count": n_steps} if n_steps else {})
            r.consumed = True
        elif r.label == ESCALATOR:
            emit("escalator", r.t0, r.t1)
            r.consumed = True

    # crosswalk: walking run crossing a road edge, not inside a structure span
    structure_spans = [(d.t_start_ms - 10_000, d.t_end_ms + 10_000) for d in detections]
    for r in runs:
        if r.label != WALKING:
            continue
        for cross in _find_crossings(fixes, net, r.t0, r.t1, cfg):
            t_cross, lat, lon, length_m, edge_name = cross
            if any(a <= t_cross <= b for a, b in structure_spans):
                continue
            emit(
                "crosswalk",
                r.t0,
                r.t1,
                lat=lat,
                lon=lon,
                attributes={"crossing_length_m": length_m, "road_edge": edge_name},
            )

    return detections


def _find_crossings(fixes: Fixes, net: RoadNetwork, t0, t1, cfg: PipelineConfig):
    """Locate road-edge crossings of the walking path within [t0, t1].

    Yields (t_ms, lat, lon, crossing_length_m, edge_name) per crossing.  The
    crossing length is the displacement over the surrounding sub-span whose
    heading stays within the configured cone around the edge perpendicular.
    """
    sel = np.where((fixes.t_ms >= t0) & (fixes.t_ms <= t1))[0]
    if len(sel) < 2:
        return []
    origin = (float(fixes.lat[sel[0]]), float(fixes.lon[sel[0]]))
    px, py = local_xy(origin, fixes.lat[sel], fixes.lon[sel])
    out = []
    for a, b, kind in net.edges:
        if kind != "road":
            continue
        pa, pb = net.nodes[a], net.nodes[b]
        ex, ey = local_xy(origin, np.array([pa[0], pb[0]]), np.array([pa[1], pb[1]]))
        q1 = (ex[0], ey[0])
        q2 = (ex[1], ey[1])
        edge_heading = math.atan2(q2[0] - q1[0], q2[1] - q1[1])
        for j in range(len(sel) - 1):
            p1 = (px[j], py[j])
            p2 = (px[j + 1], py[j + 1])
            if not segments_intersect(p1, p2, q1, q2):
                continue
            path_heading = math.atan2(p2[0] - p1[0], p2[1] - p1[1])
            dev = abs(wrap_angle(path_heading - edge_heading))
            to_perp = abs(dev - math.pi / 2.0)
            to_perp = min(to_perp, abs(dev - 3.0 * math.pi / 2.0))
            if math.degrees(to_perp) > cfg.crosswalk_angle_deg:
                continue
            lo = hi = j
            while lo > 0 and _within_cone(px, py, lo - 1, edge_heading, cfg):
                lo -= 1
            while hi < len(sel) - 2 and _within_cone(px, py, hi + 1, edge_heading, cfg):
                hi += 1
            i0, i1 = sel[lo], sel[hi + 1]
            length = haversine_m(
                (float(fixes.lat[i0]), float(fixes.lon[i0])),
                (float(fixes.lat[i1]), float(fixes.lon[i1])),
            )
            t_cross = int((fixes.t_ms[sel[j]] + fixes.t_ms[sel[j + 1]]) // 2)
            lat = float(0.5 * (fixes.lat[sel[j]] + fixes.lat[sel[j + 1]]))
            lon = float(0.5 * (fixes.lon[sel[j]] + fixes.lon[sel[j + 1]]))
            if not any(abs(t_cross - t) < 5000 for t, *_ in out):
                out.append((t_cross, lat, lon, float(length), f"{a}-{b}"))
    return out


def _within_cone(px, py, j, edge_heading, cfg):
    dx = px[j + 1] - px[j]
    dy = py[j + 1] - py[j]
    if dx == 0.0 and dy == 0.0:
        return False
    h = math.atan2(dx, dy)
    dev = abs(wrap_angle(h - edge_heading))
    to_perp = min(abs(dev - math.pi / 2.0), abs(dev - 3.0 * math.pi / 2.0))
    return math.degrees(to_perp) <= cfg.crosswalk_angle_deg


# ---------------------------------------------------------------------------
# Derived attributes

def lane_count(crossing_lengths_m, lane_width_m=3.5) -> int:
    """Lanes from the minimum observed road width over the lane width."""
    if not crossing_lengths_m:
        raise ValueError("need at least one crossing observation")
    width = min(crossing_lengths_m)
    return max(1, int(math.floor(width / lane_width_m + 0.5)))


def footbridge_height_m(step_count: int, step_rise_m=0.17) -> float:
    """Footbridge height from the ascending step count."""
    if step_count < 1:
        raise ValueError(f"step_count must be >= 1, got {step_count}")
    return step_count * step_rise_m
