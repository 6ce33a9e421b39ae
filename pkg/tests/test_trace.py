"""Trace validation rules and file format round-trips."""

import pytest

from mapsense.errors import BadInput, NonMonotonicTime, OutOfRangeField, TooShort
from mapsense.trace import (
    RoadNetwork,
    SensorSample,
    Trace,
    read_network_json,
    read_traces_jsonl,
    validate_trace,
    write_network_json,
    write_traces_jsonl,
)


def _sample(ts, **kw):
    return SensorSample(timestamp_ms=ts, **kw)


def test_validate_accepts_minimal_trace():
    tr = Trace("t", (_sample(0), _sample(10)))
    assert validate_trace(tr) is tr


def test_validate_rejects_too_short():
    with pytest.raises(TooShort):
        validate_trace(Trace("t", (_sample(0),)))


def test_validate_rejects_non_monotonic_time():
    with pytest.raises(NonMonotonicTime):
        validate_trace(Trace("t", (_sample(10), _sample(10))))
    with pytest.raises(NonMonotonicTime):
        validate_trace(Trace("t", (_sample(10), _sample(5))))


@pytest.mark.parametrize(
    "kw",
    [
        {"lat_deg": 91.0, "lon_deg": 0.0},
        {"lat_deg": 0.0, "lon_deg": 180.5},
        {"loc_accuracy_m": -1.0},
        {"gravity": (0.0, 0.0, 20.0)},   # |g| far outside the physical band
        {"gravity": (0.0, 0.0, 1.0)},
        {"serving_rss_dbm": -5.0},
        {"serving_rss_dbm": -150.0},
        {"accel": (1.0, 2.0)},           # not a 3-vector
    ],
)
def test_validate_rejects_out_of_range(kw):
    with pytest.raises(OutOfRangeField):
        validate_trace(Trace("t", (_sample(0), _sample(10, **kw))))


def test_absent_channels_stay_none():
    s = _sample(0)
    assert s.accel is None and s.magnet is None and s.serving_rss_dbm is None
    assert not s.has_location


def test_traces_jsonl_round_trip(tmp_path):
    traces = [
        Trace(
            "a",
            (
                _sample(0, accel=(0.1, -0.2, 9.81), lat_deg=40.0, lon_deg=-75.0, loc_accuracy_m=3.5),
                _sample(20, magnet=(1.0, 2.0, 3.0), serving_cell="c1", serving_rss_dbm=-80.0),
            ),
        ),
        Trace("b", (_sample(5, gravity=(0.0, 0.0, 9.81)), _sample(25)), declared_indoor=True),
    ]
    path = tmp_path / "traces.jsonl"
    write_traces_jsonl(traces, path)
    back = read_traces_jsonl(path)
    assert back == traces


def test_traces_jsonl_reports_bad_line(tmp_path):
    path = tmp_path / "traces.jsonl"
    path.write_text('{"trace_id":"a","timestamp_ms":0}\nnot json\n')
    with pytest.raises(BadInput) as err:
        read_traces_jsonl(path)
    assert err.value.line == 2
    assert "2" in str(err.value)


def test_network_round_trip_and_intersections(tmp_path):
    # node c has road degree 3, everything else less
    net = RoadNetwork(
        nodes={"a": (40.0, -75.0), "b": (40.001, -75.0), "c": (40.0, -75.001), "d": (40.001, -75.001)},
        edges=(("a", "c", "road"), ("b", "c", "road"), ("c", "d", "road"), ("a", "b", "railway")),
    )
    assert net.intersections == ("c",)
    assert len(net.road_edges()) == 3
    assert len(net.railway_edges()) == 1
    path = tmp_path / "net.json"
    write_network_json(net, path)
    back = read_network_json(path)
    assert back.nodes == net.nodes
    assert back.edges == net.edges
    assert back.intersections == net.intersections


def test_network_rejects_unknown_node_or_kind():
    with pytest.raises(BadInput):
        RoadNetwork(nodes={"a": (0.0, 0.0)}, edges=(("a", "zz", "road"),))
    with pytest.raises(BadInput):
        RoadNetwork(
            nodes={"a": (0.0, 0.0), "b": (0.0, 0.1)}, edges=(("a", "b", "cableway"),)
        )
