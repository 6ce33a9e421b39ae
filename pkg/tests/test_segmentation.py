"""Indoor filtering, mode tree, step detection, and map matching."""

import math

import numpy as np
import pytest

from mapsense.config import PipelineConfig
from mapsense.errors import EmptyNetwork
from mapsense.geo import haversine_m, offset_latlon, project_onto_segment
from mapsense.segmentation import (
    ModeFeatures,
    classify_mode,
    detect_steps,
    extract_fixes,
    filter_indoor,
    per_sample_speed,
    snap_to_network,
)
from mapsense.trace import RoadNetwork, SensorSample, Trace


def _walk_signal(freq_hz=2.0, duration_s=10.0, rate_hz=50.0, amp=2.0, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(int(duration_s * rate_hz)) / rate_hz
    z = 9.81 + amp * np.sin(2 * math.pi * freq_hz * t) + rng.normal(0, 0.01, len(t))
    return (t * 1000).astype(np.int64), z


def test_step_counter_2hz_10s_gives_20_steps():
    t_ms, z = _walk_signal()
    steps = detect_steps(t_ms, z)
    assert abs(len(steps) - 20) <= 1


@pytest.mark.parametrize("scale", [0.8, 1.0, 1.25])
def test_step_counter_amplitude_invariant(scale):
    t_ms, z = _walk_signal()
    base = len(detect_steps(t_ms, z))
    scaled = 9.81 + scale * (z - 9.81)
    assert len(detect_steps(t_ms, scaled)) == base


def test_step_counter_rejects_flat_noise():
    rng = np.random.default_rng(1)
    t_ms = np.arange(500, dtype=np.int64) * 20
    z = 9.81 + rng.normal(0, 0.05, 500)
    assert len(detect_steps(t_ms, z)) == 0


def test_step_counter_respects_min_gap():
    cfg = PipelineConfig()
    t_ms, z = _walk_signal(freq_hz=2.0)
    steps = detect_steps(t_ms, z, cfg)
    times = [t for t, _ in steps]
    gaps = np.diff(times)
    assert np.all(gaps >= cfg.step_min_gap_s * 1000)


def _mode_feats(mean_v, max_v, stop_rate=0.0):
    v3 = (max_v, max_v, max_v)
    return ModeFeatures(stop_rate, 0.0, 0.0, 100.0, v3, (0.1,) * 3, mean_v, 0.5)


def test_mode_tree_branches():
    cfg = PipelineConfig()
    assert classify_mode(_mode_feats(1.4, 1.8), oscillation=True, cfg=cfg) == "pedestrian"
    assert classify_mode(_mode_feats(1.4, 1.8), oscillation=False, cfg=cfg) == "other"
    assert classify_mode(_mode_feats(8.0, 12.0), oscillation=False, cfg=cfg) == "vehicle"
    assert classify_mode(_mode_feats(0.1, 0.2), oscillation=False, cfg=cfg) == "other"
    assert classify_mode(_mode_feats(5.0, 6.0, stop_rate=0.95), oscillation=False, cfg=cfg) == "other"


def _located_trace(accuracies, dt_ms=1000):
    samples = tuple(
        SensorSample(
            timestamp_ms=i * dt_ms,
            lat_deg=40.0 + i * 1e-5,
            lon_deg=-75.0,
            loc_accuracy_m=a,
        )
        for i, a in enumerate(accuracies)
    )
    return Trace("t", samples)


def test_filter_indoor_declared():
    tr = Trace("t", (SensorSample(0), SensorSample(10)), declared_indoor=True)
    assert filter_indoor(tr) == []


def test_filter_indoor_splits_on_long_bad_accuracy():
    acc = [5.0] * 60 + [500.0] * 60 + [5.0] * 60
    pieces = filter_indoor(_located_trace(acc))
    assert len(pieces) == 2
    assert pieces[0].trace_id == "t#0"
    assert pieces[1].trace_id == "t#1"
    assert all(s.loc_accuracy_m == 5.0 for p in pieces for s in p.samples)


def test_filter_indoor_keeps_short_glitches():
    acc = [5.0] * 60 + [500.0] * 5 + [5.0] * 60
    pieces = filter_indoor(_located_trace(acc))
    assert len(pieces) == 1
    assert pieces[0].trace_id == "t"


def test_extract_fixes_speed_roughly_constant_motion():
    # ~1.11 m/s northward at 1 Hz with no noise
    tr = _located_trace([3.0] * 30)
    fixes = extract_fixes(tr, PipelineConfig())
    assert len(fixes) == 30
    assert np.median(fixes.speed) == pytest.approx(1.11, rel=0.05)
    speeds = per_sample_speed(tr, fixes)
    assert len(speeds) == 30


def _cross_network():
    a = (40.0, -75.0)
    return RoadNetwork(
        nodes={
            "w": offset_latlon(*a, -200.0, 0.0),
            "e": offset_latlon(*a, 200.0, 0.0),
            "s": offset_latlon(*a, 0.0, -200.0),
            "n": offset_latlon(*a, 0.0, 200.0),
        },
        edges=(("w", "e", "road"), ("s", "n", "road")),
    )


def test_snap_to_network_projects_and_passes_through():
    net = _cross_network()
    a = (40.0, -75.0)
    near = offset_latlon(*a, 50.0, 10.0)     # 10 m off the west-east road
    far = offset_latlon(*a, 120.0, 90.0)     # 90 m from everything
    snapped = snap_to_network([near, far], net, radius_m=50.0)
    # the near point lands on the edge, never farther than it started
    lat, lon, d_edge, _t = project_onto_segment(near, net.nodes["w"], net.nodes["e"])
    assert haversine_m(snapped[0], (lat, lon)) < 1.0
    assert haversine_m(snapped[0], near) == pytest.approx(d_edge, rel=0.05)
    # the far point is untouched
    assert haversine_m(snapped[1], far) < 1e-6


def test_snap_to_network_requires_road_edges():
    net = RoadNetwork(
        nodes={"a": (40.0, -75.0), "b": (40.001, -75.0)}, edges=(("a", "b", "railway"),)
    )
    with pytest.raises(EmptyNetwork):
        snap_to_network([(40.0, -75.0)], net)
