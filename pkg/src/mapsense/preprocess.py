"""Orientation normalization, smoothing, and sliding-window features.

The motion frame used everywhere downstream is: X perpendicular to the
direction of travel, Y along it, Z vertical.  It is reached in two steps:
a gravity/magnetic-north rotation from the device frame into an
east/north/up frame, then a rotation about the vertical by the
instantaneous heading.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AbstainMissingChannel, DegenerateOrientation, EmptySeries
from .trace import SensorSample, Trace

Vec3 = tuple[float, float, float]

_PARALLEL_COS = math.cos(math.radians(1.0))


def _triad_rotation(gravity, magnet):
    """Device->ENU rotation matrix from a gravity and a magnetic vector.

    Rows are the device-frame directions of east, north, and up, so
    ``R @ v_device`` gives east/north/up components.
    """
    g = np.asarray(gravity, dtype=float)
    m = np.asarray(magnet, dtype=float)
    gn = np.linalg.norm(g)
    mn = np.linalg.norm(m)
    if gn == 0.0 or mn == 0.0:
        raise DegenerateOrientation("zero gravity or magnetic vector")
    up = g / gn
    cosang = abs(float(np.dot(up, m / mn)))
    if cosang >= _PARALLEL_COS:
        raise DegenerateOrientation("gravity and magnetic field parallel within 1 degree")
    h = m - np.dot(m, up) * up
    north = h / np.linalg.norm(h)
    east = np.cross(north, up)
    return np.stack([east, north, up])


def _motion_rotation(heading_rad):
    """ENU->motion rotation about the vertical (Y ends up along motion)."""
    c, s = math.cos(heading_rad), math.sin(heading_rad)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, slots=True)
class MotionFrameSample:
    """One sample expressed in the motion frame."""

    timestamp_ms: int
    accel_world: Vec3
    magnet_world: Vec3 | None
    gravity_y: float
    gravity_z: float
    heading_rad: float


def to_world_frame(sample: SensorSample, reference: SensorSample | None = None) -> MotionFrameSample:
    """Rotate one sample from the device frame into the motion frame.

    The rotation is built from the reference sample's gravity and magnetic
    vectors (default: the sample itself), then turned about the vertical by
    the sample's azimuth.  Norm preserving by construction.
    """
    ref = reference if reference is not None else sample
    if sample.accel is None or ref.gravity is None or ref.magnet is None:
        raise AbstainMissingChannel("to_world_frame needs accel, gravity, and magnet")
    heading = sample.orientation[0] if sample.orientation is not None else 0.0
    rot = _motion_rotation(heading) @ _triad_rotation(ref.gravity, ref.magnet)
    accel = rot @ np.asarray(sample.accel, dtype=float)
    magnet = rot @ np.asarray(sample.magnet, dtype=float) if sample.magnet is not None else None
    if sample.gravity is not None:
        grav = rot @ np.asarray(sample.gravity, dtype=float)
        gy, gz = float(grav[1]), float(grav[2])
    else:
        gy, gz = 0.0, 0.0
    return MotionFrameSample(
        timestamp_ms=sample.timestamp_ms,
        accel_world=tuple(float(x) for x in accel),
        magnet_world=tuple(float(x) for x in magnet) if magnet is not None else None,
        gravity_y=gy,
        gravity_z=gz,
        heading_rad=_wrap(heading),
    )


def _wrap(a):
    out = math.fmod(a + math.pi, 2.0 * math.pi)
    if out <= 0.0:
        out += 2.0 * math.pi
    return out - math.pi


@dataclass
class MotionFrames:
    """Batch motion-frame view of a trace (column arrays, one row per sample)."""

    t_ms: np.ndarray                 # (n,) int64
    accel: np.ndarray                # (n, 3) motion frame
    magnet: np.ndarray | None        # (n, 3) motion frame
    gravity: np.ndarray | None       # (n, 3) motion frame
    heading: np.ndarray              # (n,) radians, unwrapped

    def __len__(self):
        return len(self.t_ms)


def to_world_frames(trace: Trace) -> MotionFrames:
    """Batch version of :func:`to_world_frame` over a whole trace.

    The device->ENU rotation is built once from the per-trace median
    gravity and magnetic vectors, which keeps brief attitude excursions
    (bumps, bridge ramps) visible in the motion-frame gravity channel.
    """
    samples = trace.samples
    n = len(samples)
    if any(s.accel is None for s in samples):
        raise AbstainMissingChannel("trace is missing the accelerometer channel")
    if any(s.gravity is None for s in samples) or any(s.magnet is None for s in samples):
        raise AbstainMissingChannel("trace is missing gravity or magnetometer channels")

    t_ms = np.fromiter((s.timestamp_ms for s in samples), dtype=np.int64, count=n)
    accel = np.array([s.accel for s in samples], dtype=float)
    magnet = np.array([s.magnet for s in samples], dtype=float)
    gravity = np.array([s.gravity for s in samples], dtype=float)
    if samples[0].orientation is not None:
        azimuth = np.array([s.orientation[0] for s in samples], dtype=float)
    elif samples[0].gyro is not None:
        # no compass heading: integrate the vertical gyro rate from zero
        gz = np.array([s.gyro[2] for s in samples], dtype=float)
        dt = np.diff(t_ms) / 1000.0
        azimuth = np.concatenate([[0.0], np.cumsum(gz[:-1] * dt)])
    else:
        azimuth = np.zeros(n)

    triad = _triad_rotation(np.median(gravity, axis=0), np.median(magnet, axis=0))
    accel_enu = accel @ triad.T
    magnet_enu = magnet @ triad.T
    gravity_enu = gravity @ triad.T

    heading = np.unwrap(azimuth)
    c, s = np.cos(heading), np.sin(heading)

    def spin(v):
        out = np.empty_like(v)
        out[:, 0] = c * v[:, 0] - s * v[:, 1]
        out[:, 1] = s * v[:, 0] + c * v[:, 1]
        out[:, 2] = v[:, 2]
        return out

    return MotionFrames(
        t_ms=t_ms,
        accel=spin(accel_enu),
        magnet=spin(magnet_enu),
        gravity=spin(gravity_enu),
        heading=heading,
    )


# ---------------------------------------------------------------------------
# LOWESS

def lowess_smooth(t, y, span_fraction=0.1):
    """Locally weighted degree-1 regression with tricube weights.

    At each point, fits a weighted straight line over the nearest
    ``ceil(span_fraction * n)`` neighbors (contiguous in t, which must be
    strictly increasing) and returns the fitted values.  Single pass, no
    robustifying iterations.
    """
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    if n < 2:
        raise EmptySeries(f"need at least 2 points, got {n}")
    if not (0.0 < span_fraction <= 1.0):
        raise ValueError(f"span_fraction must be in (0, 1], got {span_fraction}")
    if np.any(np.diff(t) <= 0):
        raise ValueError("t must be strictly increasing")

    k = min(n, max(2, int(math.ceil(span_fraction * n))))

    # contiguous k-nearest window per point, two-pointer over sorted t
    lo = np.empty(n, dtype=np.int64)
    j = 0
    for i in range(n):
        while j + k < n and t[j + k] - t[i] < t[i] - t[j]:
            j += 1
        lo[i] = j
    idx = lo[:, None] + np.arange(k)[None, :]

    tw = t[idx] - t[:, None]          # centered abscissa, 0 at the fit point
    yw = y[idx]
    h = np.abs(tw).max(axis=1)
    h = np.where(h <= 0.0, 1.0, h)
    u = np.clip(np.abs(tw) / h[:, None], 0.0, 1.0)
    w = (1.0 - u ** 3) ** 3

    sw = w.sum(axis=1)
    swx = (w * tw).sum(axis=1)
    swy = (w * yw).sum(axis=1)
    swxx = (w * tw * tw).sum(axis=1)
    swxy = (w * tw * yw).sum(axis=1)
    denom = sw * swxx - swx ** 2
    scale = np.maximum(sw * swxx, swx ** 2)
    ok = denom > 1e-12 * np.maximum(scale, 1e-300)
    fitted = np.where(ok, (swxx * swy - swx * swxy) / np.where(ok, denom, 1.0), swy / sw)
    return fitted


def smooth_series_pairs(series, span_fraction=0.1):
    """Convenience wrapper over (t, value) pair lists."""
    if len(series) == 0:
        raise EmptySeries("empty series")
    t = [p[0] for p in series]
    y = [p[1] for p in series]
    fitted = lowess_smooth(t, y, span_fraction)
    return list(zip(t, fitted.tolist()))


# ---------------------------------------------------------------------------
# Sliding-window features

@dataclass
class WindowFeatures:
    """Per-window signal statistics feeding both semantic classifiers."""

    t_start_ms: int
    t_end_ms: int
    var_accel: Vec3
    var_magnet_x: float | None
    var_magnet_y: float | None
    var_gravity_y: float
    var_gravity_z: float
    rss_delta_db: float | None
    mean_speed_mps: float
    heading_change_rad: float
    distance_m: float
    gravity_y_profile: np.ndarray    # (m, 2): cumulative offset_m, gravity_y


def _var(a):
    # two-pass variance
    return float(np.mean((a - np.mean(a)) ** 2))


def window_features(
    frames: MotionFrames,
    *,
    rss_t_ms=None,
    rss_dbm=None,
    speed_mps=None,
    window_s=2.0,
    overlap=0.5,
    rss_baseline_s=60.0,
    min_window_samples=4,
) -> list[WindowFeatures]:
    """Time-based sliding windows of variance/RSS/speed features.

    ``speed_mps`` is a per-sample speed estimate aligned with the frames;
    ``rss_t_ms``/``rss_dbm`` are the (sparser) cellular readings.  Windows
    with fewer than ``min_window_samples`` samples are skipped.
    """
    if not (0.0 <= overlap < 1.0):
        raise ValueError(f"overlap must be in [0, 1), got {overlap}")
    t = frames.t_ms
    n = len(t)
    out: list[WindowFeatures] = []
    if n == 0:
        return out

    if speed_mps is None:
        speed_mps = np.zeros(n)
    speed_mps = np.asarray(speed_mps, dtype=float)
    dt_s = np.diff(t) / 1000.0
    seg = 0.5 * (speed_mps[1:] + speed_mps[:-1]) * dt_s
    cumdist = np.concatenate([[0.0], np.cumsum(seg)])

    have_rss = rss_t_ms is not None and rss_dbm is not None and len(rss_dbm) > 0
    if have_rss:
        rss_t_ms = np.asarray(rss_t_ms, dtype=np.int64)
        rss_dbm = np.asarray(rss_dbm, dtype=float)

    win_ms = int(round(window_s * 1000))
    hop_ms = max(1, int(round(win_ms * (1.0 - overlap))))
    start = int(t[0])
    last = int(t[-1])

    while start + win_ms <= last + 1:
        end = start + win_ms
        i0 = int(np.searchsorted(t, start, side="left"))
        i1 = int(np.searchsorted(t, end, side="left"))
        if i1 - i0 >= min_window_samples:
            sl = slice(i0, i1)
            acc = frames.accel[sl]
            var_accel = (_var(acc[:, 0]), _var(acc[:, 1]), _var(acc[:, 2]))
            if frames.magnet is not None:
                vmx = _var(frames.magnet[sl, 0])
                vmy = _var(frames.magnet[sl, 1])
            else:
                vmx = vmy = None
            if frames.gravity is not None:
                vgy = _var(frames.gravity[sl, 1])
                vgz = _var(frames.gravity[sl, 2])
                gy = frames.gravity[sl, 1]
            else:
                vgy = vgz = 0.0
                gy = np.zeros(i1 - i0)
            rss_delta = None
            if have_rss:
                in_win = rss_dbm[(rss_t_ms >= start) & (rss_t_ms < end)]
                base = rss_dbm[(rss_t_ms >= start - int(rss_baseline_s * 1000)) & (rss_t_ms < start)]
                if len(base) == 0:
                    base = rss_dbm[: max(1, int(np.searchsorted(rss_t_ms, start, side="left")))]
                if len(in_win) > 0 and len(base) > 0:
                    rss_delta = float(np.median(in_win) - np.median(base))
            mean_speed = float(np.mean(speed_mps[sl]))
            heading_change = float(frames.heading[i1 - 1] - frames.heading[i0])
            dist = float(cumdist[i1 - 1] - cumdist[i0])
            profile = np.column_stack([cumdist[sl], gy])
            out.append(
                WindowFeatures(
                    t_start_ms=start,
                    t_end_ms=end,
                    var_accel=var_accel,
                    var_magnet_x=vmx,
                    var_magnet_y=vmy,
                    var_gravity_y=vgy,
                    var_gravity_z=vgz,
                    rss_delta_db=rss_delta,
                    mean_speed_mps=mean_speed,
                    heading_change_rad=heading_change,
                    distance_m=dist,
                    gravity_y_profile=profile,
                )
            )
        start += hop_ms
    return out
