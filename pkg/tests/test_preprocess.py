"""Orientation rotation, LOWESS, and window feature oracles."""

import math

import numpy as np
import pytest

from mapsense.config import PipelineConfig
from mapsense.errors import AbstainMissingChannel, DegenerateOrientation, EmptySeries
from mapsense.preprocess import (
    MotionFrames,
    lowess_smooth,
    smooth_series_pairs,
    to_world_frame,
    to_world_frames,
    window_features,
)
from mapsense.trace import SensorSample, Trace


def _lowess_oracle(t, y, span_fraction):
    """Direct per-point weighted least squares with tricube weights."""
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(t)
    k = min(n, max(2, int(math.ceil(span_fraction * n))))
    out = np.empty(n)
    for i in range(n):
        # contiguous k nearest by |t - t_i|
        best_lo, best_width = 0, math.inf
        for lo in range(0, n - k + 1):
            width = max(abs(t[lo + j] - t[i]) for j in range(k))
            if width < best_width:
                best_lo, best_width = lo, width
        idx = np.arange(best_lo, best_lo + k)
        d = np.abs(t[idx] - t[i])
        h = d.max() if d.max() > 0 else 1.0
        w = (1.0 - np.clip(d / h, 0.0, 1.0) ** 3) ** 3
        x = t[idx] - t[i]
        sw, swx = w.sum(), (w * x).sum()
        swxx, swy, swxy = (w * x * x).sum(), (w * y[idx]).sum(), (w * x * y[idx]).sum()
        denom = sw * swxx - swx ** 2
        if denom > 1e-12 * max(sw * swxx, swx ** 2, 1e-300):
            out[i] = (swxx * swy - swx * swxy) / denom
        else:
            out[i] = swy / sw
    return out


def test_lowess_matches_direct_wls_oracle():
    rng = np.random.default_rng(23)
    for trial in range(50):
        n = int(rng.integers(8, 120))
        t = np.cumsum(rng.uniform(0.2, 2.0, n))
        y = rng.normal(0.0, 3.0, n) + 0.5 * t
        frac = float(rng.uniform(0.05, 0.9))
        got = lowess_smooth(t, y, frac)
        want = _lowess_oracle(t, y, frac)
        scale = np.maximum(np.abs(want), 1.0)
        assert np.all(np.abs(got - want) / scale < 1e-9), f"trial {trial}"


def test_lowess_reproduces_constant_and_line_exactly():
    t = np.arange(30, dtype=float)
    const = np.full(30, 4.25)
    np.testing.assert_allclose(lowess_smooth(t, const, 0.3), const, atol=1e-10)
    line = 2.0 * t - 7.0
    np.testing.assert_allclose(lowess_smooth(t, line, 0.3), line, atol=1e-9)


def test_lowess_input_validation():
    with pytest.raises(EmptySeries):
        lowess_smooth([0.0], [1.0])
    with pytest.raises(ValueError):
        lowess_smooth([0.0, 1.0], [1.0, 2.0], span_fraction=0.0)
    with pytest.raises(ValueError):
        lowess_smooth([0.0, 0.0, 1.0], [1.0, 2.0, 3.0])
    with pytest.raises(EmptySeries):
        smooth_series_pairs([])


def test_to_world_frame_preserves_norms():
    rng = np.random.default_rng(7)
    for _ in range(25):
        g = rng.normal(0, 1, 3)
        g = 9.81 * g / np.linalg.norm(g)
        m = rng.normal(0, 20, 3)
        a = rng.normal(0, 3, 3)
        s = SensorSample(
            timestamp_ms=0,
            accel=tuple(a),
            magnet=tuple(m),
            gravity=tuple(g),
            orientation=(float(rng.uniform(-3, 3)), 0.0, 0.0),
        )
        out = to_world_frame(s)
        assert np.linalg.norm(out.accel_world) == pytest.approx(np.linalg.norm(a), rel=1e-9)
        assert np.linalg.norm(out.magnet_world) == pytest.approx(np.linalg.norm(m), rel=1e-9)


def test_to_world_frame_gravity_lands_on_vertical():
    # device tilted: gravity along device x; after rotation it must be all-z
    s = SensorSample(
        timestamp_ms=0,
        accel=(9.81, 0.0, 0.0),
        magnet=(3.0, 20.0, -40.0),
        gravity=(9.81, 0.0, 0.0),
        orientation=(0.7, 0.0, 0.0),
    )
    out = to_world_frame(s)
    assert out.accel_world[2] == pytest.approx(9.81, rel=1e-9)
    assert abs(out.accel_world[0]) < 1e-9
    assert abs(out.accel_world[1]) < 1e-9


def test_to_world_frame_abstains_and_degenerates():
    with pytest.raises(AbstainMissingChannel):
        to_world_frame(SensorSample(timestamp_ms=0, accel=(0, 0, 9.81)))
    with pytest.raises(DegenerateOrientation):
        to_world_frame(
            SensorSample(
                timestamp_ms=0,
                accel=(0, 0, 9.81),
                gravity=(0, 0, 9.81),
                magnet=(0, 0, 30.0),   # parallel to gravity
            )
        )


def test_to_world_frames_matches_single_sample_rotation():
    # identical gravity/magnet on every sample: batch and per-sample agree
    g = (0.0, 0.0, 9.81)
    m = (0.0, 20.0, -40.0)
    samples = tuple(
        SensorSample(
            timestamp_ms=20 * i,
            accel=(0.1 * i, -0.2, 9.81),
            magnet=m,
            gravity=g,
            orientation=(0.3, 0.0, 0.0),
        )
        for i in range(10)
    )
    frames = to_world_frames(Trace("t", samples))
    for i, s in enumerate(samples):
        single = to_world_frame(s)
        np.testing.assert_allclose(frames.accel[i], single.accel_world, atol=1e-9)
        np.testing.assert_allclose(frames.gravity[i][1:], [single.gravity_y, single.gravity_z], atol=1e-9)


def test_window_features_variance_against_naive_oracle():
    rng = np.random.default_rng(31)
    n = 400
    t = np.arange(n, dtype=np.int64) * 20   # 50 Hz, 8 s
    accel = rng.normal(0, 1, (n, 3))
    magnet = rng.normal(0, 2, (n, 3))
    gravity = rng.normal(0, 0.1, (n, 3)) + [0, 0, 9.81]
    frames = MotionFrames(t_ms=t, accel=accel, magnet=magnet, gravity=gravity, heading=np.zeros(n))
    cfg = PipelineConfig()
    wins = window_features(frames, window_s=cfg.window_s, overlap=cfg.window_overlap)
    assert len(wins) >= 3
    for w in wins:
        sel = (t >= w.t_start_ms) & (t < w.t_end_ms)

        def naive_var(col):
            mu = col[sel].sum() / sel.sum()
            return ((col[sel] - mu) ** 2).sum() / sel.sum()

        assert w.var_accel[0] == pytest.approx(naive_var(accel[:, 0]), rel=1e-9)
        assert w.var_magnet_x == pytest.approx(naive_var(magnet[:, 0]), rel=1e-9)
        assert w.var_gravity_y == pytest.approx(naive_var(gravity[:, 1]), rel=1e-9)
        assert w.var_gravity_z == pytest.approx(naive_var(gravity[:, 2]), rel=1e-9)


def test_window_features_rss_delta_uses_trailing_baseline():
    n = 260
    t = np.arange(n, dtype=np.int64) * 20
    frames = MotionFrames(
        t_ms=t,
        accel=np.zeros((n, 3)),
        magnet=np.zeros((n, 3)),
        gravity=np.zeros((n, 3)) + [0, 0, 9.81],
        heading=np.zeros(n),
    )
    rss_t = np.arange(0, 4000, 500, dtype=np.int64)
    rss = np.where(rss_t < 2000, -70.0, -90.0)   # 20 dB drop at 2 s
    wins = window_features(frames, rss_t_ms=rss_t, rss_dbm=rss)
    by_start = {w.t_start_ms: w for w in wins}
    assert by_start[2000].rss_delta_db == pytest.approx(-20.0)
    assert by_start[0].rss_delta_db == pytest.approx(0.0)
