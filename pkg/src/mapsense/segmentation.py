"""Indoor filtering, mode segmentation, step detection, and map matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig
from .errors import EmptyNetwork
from .geo import local_xy, xy_to_latlon
from .preprocess import MotionFrames, lowess_smooth
from .trace import RoadNetwork, Trace

PEDESTRIAN = "pedestrian"
VEHICLE = "vehicle"
OTHER = "other"


# ---------------------------------------------------------------------------
# Location fixes and speed

@dataclass
class Fixes:
    """Location/cellular readings of a trace, with smoothed positions."""

    idx: np.ndarray        # sample indices carrying a fix
    t_ms: np.ndarray
    lat: np.ndarray        # smoothed
    lon: np.ndarray        # smoothed
    raw_lat: np.ndarray
    raw_lon: np.ndarray
    accuracy: np.ndarray
    speed: np.ndarray      # m/s between smoothed fixes
    rss_idx: np.ndarray
    rss_t_ms: np.ndarray
    rss_dbm: np.ndarray

    def __len__(self):
        return len(self.idx)


def extract_fixes(trace: Trace, cfg: PipelineConfig) -> Fixes:
    """Collect location fixes, smooth them, and derive per-fix speed."""
    idx, t, lat, lon, acc = [], [], [], [], []
    ridx, rt, rv = [], [], []
    for i, s in enumerate(trace.samples):
        if s.has_location:
            idx.append(i)
            t.append(s.timestamp_ms)
            lat.append(s.lat_deg)
            lon.append(s.lon_deg)
            acc.append(s.loc_accuracy_m if s.loc_accuracy_m is not None else 0.0)
        if s.serving_rss_dbm is not None:
            ridx.append(i)
            rt.append(s.timestamp_ms)
            rv.append(s.serving_rss_dbm)
    idx = np.asarray(idx, dtype=np.int64)
    t = np.asarray(t, dtype=np.int64)
    raw_lat = np.asarray(lat, dtype=float)
    raw_lon = np.asarray(lon, dtype=float)
    acc = np.asarray(acc, dtype=float)

    if len(t) >= 3:
        span_s = (t[-1] - t[0]) / 1000.0
        frac = 1.0 if span_s <= 0 else min(1.0, max(cfg.location_smooth_s / span_s, 3.0 / len(t)))
        slat = lowess_smooth(t.astype(float), raw_lat, frac)
        slon = lowess_smooth(t.astype(float), raw_lon, frac)
    else:
        slat, slon = raw_lat.copy(), raw_lon.copy()

    if len(t) >= 2:
        origin = (float(slat[0]), float(slon[0]))
        x, y = local_xy(origin, slat, slon)
        d = np.hypot(np.diff(x), np.diff(y))
        dt = np.maximum(np.diff(t) / 1000.0, 1e-6)
        v = d / dt
        speed = np.empty(len(t))
        speed[0] = v[0]
        speed[1:] = v
    else:
        speed = np.zeros(len(t))

    return Fixes(
        idx=idx,
        t_ms=t,
        lat=slat,
        lon=slon,
        raw_lat=raw_lat,
        raw_lon=raw_lon,
        accuracy=acc,
        speed=speed,
        rss_idx=np.asarray(ridx, dtype=np.int64),
        rss_t_ms=np.asarray(rt, dtype=np.int64),
        rss_dbm=np.asarray(rv, dtype=float),
    )


def per_sample_speed(trace: Trace, fixes: Fixes) -> np.ndarray:
    """Interpolate fix speeds onto every sample timestamp."""
    t = np.fromiter((s.timestamp_ms for s in trace.samples), dtype=np.int64, count=len(trace.samples))
    if len(fixes.t_ms) == 0:
        return np.zeros(len(t))
    return np.interp(t.astype(float), fixes.t_ms.astype(float), fixes.speed)


def location_at(fixes: Fixes, t_ms) -> tuple[float, float]:
    """Smoothed location interpolated at an arbitrary timestamp."""
    lat = float(np.interp(float(t_ms), fixes.t_ms.astype(float), fixes.lat))
    lon = float(np.interp(float(t_ms), fixes.t_ms.astype(float), fixes.lon))
    return lat, lon


def accuracy_at(fixes: Fixes, t0_ms, t1_ms) -> float:
    """Mean reported location accuracy over a time span."""
    if len(fixes.t_ms) == 0:
        return 0.0
    sel = (fixes.t_ms >= t0_ms) & (fixes.t_ms <= t1_ms)
    if not np.any(sel):
        i = int(np.argmin(np.abs(fixes.t_ms - (t0_ms + t1_ms) // 2)))
        return float(fixes.accuracy[i])
    return float(np.mean(fixes.accuracy[sel]))


# ---------------------------------------------------------------------------
# Indoor filtering

def filter_indoor(trace: Trace, cfg: PipelineConfig | None = None) -> list[Trace]:
    """Drop indoor spans; return the remaining outdoor sub-traces.

    A span is indoor when the trace is declared indoor outright, or when the
    reported location accuracy stays above the indoor threshold for longer
    than the configured duration.
    """
    cfg = cfg or PipelineConfig()
    if trace.declared_indoor:
        return []
    bad_ranges = []  # (t_start, t_end) ms
    run_start = None
    last_bad_t = None
    for s in trace.samples:
        if s.loc_accuracy_m is None:
            continue
        if s.loc_accuracy_m > cfg.indoor_accuracy_m:
            if run_start is None:
                run_start = s.timestamp_ms
            last_bad_t = s.timestamp_ms
        else:
            if run_start is not None and last_bad_t - run_start > cfg.indoor_span_s * 1000:
                bad_ranges.append((run_start, last_bad_t))
            run_start = None
    if run_start is not None and last_bad_t - run_start > cfg.indoor_span_s * 1000:
        bad_ranges.append((run_start, last_bad_t))

    if not bad_ranges:
        return [trace]

    def is_bad(ts):
        return any(a <= ts <= b for a, b in bad_ranges)

    pieces = []
    cur = []
    for s in trace.samples:
        if is_bad(s.timestamp_ms):
            if len(cur) >= 2:
                pieces.append(cur)
            cur = []
        else:
            cur.append(s)
    if len(cur) >= 2:
        pieces.append(cur)
    if len(pieces) == 1:
        return [Trace(trace.trace_id, tuple(pieces[0]), trace.declared_indoor)]
    return [
        Trace(f"{trace.trace_id}#{k}", tuple(p), trace.declared_indoor) for k, p in enumerate(pieces)
    ]


# ---------------------------------------------------------------------------
# Mode segmentation

@dataclass
class ModeFeatures:
    """Per-segment statistics for the transportation-mode tree."""

    stop_rate: float
    heading_change_rate: float
    velocity_change_rate: float
    segment_length_m: float
    max_velocity: tuple[float, float, float]
    max_accel: tuple[float, float, float]
    mean_velocity: float
    velocity_variance: float


@dataclass
class Segment:
    """A contiguous slice of a trace labeled with a transportation mode."""

    trace_id: str
    start_idx: int
    end_idx: int                      # exclusive
    mode: str
    features: ModeFeatures | None = None
    snapped: list[tuple[float, float]] | None = None
    step_events: list[tuple[int, float]] = field(default_factory=list)


def _topk(values, k=3):
    v = sorted((float(x) for x in values), reverse=True)
    v += [0.0] * k
    return tuple(v[:k])


def mode_features(fixes: Fixes, heading, heading_t_ms, i_lo, i_hi) -> ModeFeatures:
    """Compute the mode-tree features over fix indices [i_lo, i_hi)."""
    v = fixes.speed[i_lo:i_hi]
    t = fixes.t_ms[i_lo:i_hi].astype(float) / 1000.0
    if len(v) < 2:
        zero3 = (0.0, 0.0, 0.0)
        return ModeFeatures(1.0, 0.0, 0.0, 0.0, zero3, zero3, 0.0, 0.0)
    dt = np.maximum(np.diff(t), 1e-6)
    accel = np.abs(np.diff(v)) / dt
    mean_v = float(np.mean(v))
    if len(heading) >= 2:
        h = np.interp(t, np.asarray(heading_t_ms, dtype=float) / 1000.0, heading)
        hrate = float(np.mean(np.abs(np.diff(h)) / dt))
    else:
        hrate = 0.0
    length = float(np.sum(0.5 * (v[1:] + v[:-1]) * dt))
    return ModeFeatures(
        stop_rate=float(np.mean(v < 0.5)),
        heading_change_rate=hrate,
        velocity_change_rate=float(np.mean(accel) / max(mean_v, 1e-6)),
        segment_length_m=length,
        max_velocity=_topk(v),
        max_accel=_topk(accel),
        mean_velocity=mean_v,
        velocity_variance=float(np.var(v)),
    )


def _has_step_oscillation(frames: MotionFrames, t0_ms, t1_ms, cfg: PipelineConfig) -> bool:
    sel = (frames.t_ms >= t0_ms) & (frames.t_ms < t1_ms)
    z = frames.accel[sel, 2]
    if len(z) < 8:
        return False
    win = max(8, int(round(2.0 * len(z) * 1000.0 / max(t1_ms - t0_ms, 1))))
    vars_ = [np.var(z[i : i + win]) for i in range(0, max(1, len(z) - win + 1), win)]
    med = float(np.median(vars_))
    return cfg.osc_var_min <= med <= cfg.osc_var_max


def classify_mode(feats: ModeFeatures, oscillation: bool, cfg: PipelineConfig) -> str:
    """Fixed decision tree over the mode features."""
    if feats.stop_rate >= 0.9 or feats.mean_velocity < 0.3:
        return OTHER
    if (
        feats.mean_velocity < cfg.ped_mean_speed_mps
        and feats.max_velocity[0] < cfg.ped_max_speed_mps
        and oscillation
    ):
        return PEDESTRIAN
    if feats.mean_velocity > cfg.veh_mean_speed_mps or feats.max_velocity[0] > cfg.veh_max_speed_mps:
        return VEHICLE
    return OTHER


def segment_and_classify_mode(
    trace: Trace, frames: MotionFrames, fixes: Fixes, cfg: PipelineConfig | None = None
) -> list[Segment]:
    """Split an outdoor trace at walk/vehicle change points and label modes.

    Change points are sustained crossings of the pedestrian speed bound; a
    candidate regime must persist for the minimum segment duration before it
    splits the trace.  Every sample index lands in exactly one segment.
    """
    cfg = cfg or PipelineConfig()
    n = len(trace.samples)
    if len(fixes) < 2:
        return [Segment(trace.trace_id, 0, n, OTHER)]

    # coarse per-fix regime with hysteresis around the pedestrian bound
    v = fixes.speed
    regime = np.zeros(len(v), dtype=np.int8)  # 0 slow / 1 fast
    state = 1 if v[0] > cfg.ped_max_speed_mps else 0
    for i, vi in enumerate(v):
        if state == 0 and vi > cfg.ped_max_speed_mps + 1.0:
            state = 1
        elif state == 1 and vi < cfg.ped_mean_speed_mps:
            state = 0
        regime[i] = state

    # sustained runs only: short excursions merge into the surrounding run
    cuts = [0]
    run_start = 0
    for i in range(1, len(v)):
        if regime[i] != regime[run_start]:
            dur = (fixes.t_ms[i - 1] - fixes.t_ms[run_start]) / 1000.0
            if dur >= cfg.min_segment_s or run_start == 0:
                cuts.append(i)
            run_start = i
    # collapse runs that never lasted long enough
    bounds = [0]
    for c in cuts[1:]:
        bounds.append(c)
    bounds.append(len(v))
    merged = [bounds[0]]
    for i in range(1, len(bounds) - 1):
        dur = (fixes.t_ms[bounds[i + 1] - 1] - fixes.t_ms[bounds[i]]) / 1000.0
        if dur >= cfg.min_segment_s:
            merged.append(bounds[i])
    merged.append(len(v))

    segments = []
    for a, b in zip(merged[:-1], merged[1:]):
        if b - a < 1:
            continue
        s_idx = int(fixes.idx[a])
        e_idx = n if b == len(v) else int(fixes.idx[b])
        if segments:
            s_idx = segments[-1].end_idx
        if s_idx >= e_idx:
            continue
        t0 = trace.samples[s_idx].timestamp_ms
        t1 = trace.samples[e_idx - 1].timestamp_ms
        feats = mode_features(fixes, frames.heading, frames.t_ms, a, b)
        osc = _has_step_oscillation(frames, t0, t1, cfg)
        mode = classify_mode(feats, osc, cfg)
        segments.append(Segment(trace.trace_id, s_idx, e_idx, mode, features=feats))
    if segments:
        segments[0].start_idx = 0
        segments[-1].end_idx = n
    else:
        segments = [Segment(trace.trace_id, 0, n, OTHER)]
    return segments


# ---------------------------------------------------------------------------
# Step detection

def detect_steps(
    t_ms, accel_vertical, cfg: PipelineConfig | None = None, *, min_peak_accel=0.5
) -> list[tuple[int, float]]:
    """Adaptive peak detector over the vertical motion-frame acceleration.

    Threshold is rolling mean + k * rolling std over the configured window;
    peaks closer than the minimum inter-peak gap are suppressed (highest
    first).  ``min_peak_accel`` is an absolute noise floor that rejects
    flat/noise-only signals; the count is otherwise scale independent.
    """
    cfg = cfg or PipelineConfig()
    t_ms = np.asarray(t_ms, dtype=np.int64)
    z = np.asarray(accel_vertical, dtype=float)
    n = len(z)
    if n < 4:
        return []

    # light smoothing keeps single-sample noise out of the peak picker;
    # edge windows truncate rather than zero-pad so trace ends stay level
    dt_med = float(np.median(np.diff(t_ms))) / 1000.0
    k_smooth = max(3, int(round(cfg.smooth_window_s / max(dt_med, 1e-3))))
    half_s = k_smooth // 2
    zcum = np.cumsum(np.concatenate([[0.0], z]))
    s_lo = np.maximum(0, np.arange(n) - half_s)
    s_hi = np.minimum(n, np.arange(n) + half_s + 1)
    zs = (zcum[s_hi] - zcum[s_lo]) / (s_hi - s_lo)

    half = max(2, int(round(cfg.step_window_s / 2.0 / max(dt_med, 1e-3))))
    csum = np.cumsum(np.concatenate([[0.0], zs]))
    csum2 = np.cumsum(np.concatenate([[0.0], zs * zs]))
    lo = np.maximum(0, np.arange(n) - half)
    hi = np.minimum(n, np.arange(n) + half + 1)
    cnt = hi - lo
    mean = (csum[hi] - csum[lo]) / cnt
    var = np.maximum((csum2[hi] - csum2[lo]) / cnt - mean ** 2, 0.0)
    thresh = mean + cfg.step_k * np.sqrt(var)

    cand = np.where(
        (zs[1:-1] > zs[:-2]) & (zs[1:-1] >= zs[2:]) & (zs[1:-1] > thresh[1:-1]) & (zs[1:-1] - mean[1:-1] > min_peak_accel)
    )[0] + 1
    if len(cand) == 0:
        return []

    # greedy non-max suppression by peak height within the minimum gap
    order = cand[np.argsort(-zs[cand], kind="stable")]
    gap_ms = int(cfg.step_min_gap_s * 1000)
    taken = []
    taken_t = []
    for i in order:
        ti = t_ms[i]
        if all(abs(int(ti) - int(tt)) >= gap_ms for tt in taken_t):
            taken.append(i)
            taken_t.append(ti)
    taken.sort()
    return [(int(t_ms[i]), float(zs[i] - mean[i])) for i in taken]


# ---------------------------------------------------------------------------
# Map matching (nearest-edge projection)

def snap_to_network(locations, net: RoadNetwork, radius_m=50.0):
    """Project each (lat, lon) onto the nearest road edge within the radius.

    Points farther than the radius from every edge pass through unchanged.
    Never increases the distance to the network.
    """
    road_edges = net.road_edges()
    if not road_edges:
        raise EmptyNetwork("road network has no road edges")
    locations = list(locations)
    if not locations:
        return []
    origin = locations[0]
    lats = np.array([p[0] for p in locations])
    lons = np.array([p[1] for p in locations])
    px, py = local_xy(origin, lats, lons)

    best_d2 = np.full(len(locations), np.inf)
    best_x = px.copy()
    best_y = py.copy()
    for a, b in road_edges:
        pa = net.nodes[a]
        pb = net.nodes[b]
        ax, ay = local_xy(origin, np.array([pa[0]]), np.array([pa[1]]))
        bx, by = local_xy(origin, np.array([pb[0]]), np.array([pb[1]]))
        ax, ay, bx, by = ax[0], ay[0], bx[0], by[0]
        dx, dy = bx - ax, by - ay
        seg2 = dx * dx + dy * dy
        if seg2 == 0.0:
            t = np.zeros(len(locations))
        else:
            t = np.clip(((px - ax) * dx + (py - ay) * dy) / seg2, 0.0, 1.0)
        fx, fy = ax + t * dx, ay + t * dy
        d2 = (fx - px) ** 2 + (fy - py) ** 2
        better = d2 < best_d2
        best_d2 = np.where(better, d2, best_d2)
        best_x = np.where(better, fx, best_x)
        best_y = np.where(better, fy, best_y)

    within = np.sqrt(best_d2) <= radius_m
    out_x = np.where(within, best_x, px)
    out_y = np.where(within, best_y, py)
    lat_out, lon_out = xy_to_latlon(origin, out_x, out_y)
    return list(zip(lat_out.tolist(), lon_out.tolist()))
