"""Simulator determinism, coverage, and serialization."""

import numpy as np
import pytest

from mapsense.config import ALL_KINDS
from mapsense.errors import InvalidScenario
from mapsense.simulator import (
    GroundTruth,
    build_network,
    network_length_m,
    read_truth_json,
    simulate_benchmark,
    simulate_to_dir,
    write_truth_json,
)
from mapsense.trace import validate_trace


def test_simulation_is_deterministic():
    a_traces, _, a_truth = simulate_benchmark(3)
    b_traces, _, b_truth = simulate_benchmark(3)
    assert len(a_traces) == len(b_traces)
    for ta, tb in zip(a_traces, b_traces):
        assert ta.trace_id == tb.trace_id
        assert ta.samples == tb.samples
    assert a_truth.to_dict() == b_truth.to_dict()


def test_different_seeds_differ():
    a, _, _ = simulate_benchmark(0)
    b, _, _ = simulate_benchmark(1)
    assert a[0].samples != b[0].samples


def test_simulate_to_dir_outputs_are_byte_identical(tmp_path):
    d1 = tmp_path / "one"
    d2 = tmp_path / "two"
    simulate_to_dir(d1, seed=2)
    simulate_to_dir(d2, seed=2)
    for name in ("traces.jsonl", "network.json", "truth.json"):
        assert (d1 / name).read_bytes() == (d2 / name).read_bytes()


def test_benchmark_covers_every_kind(benchmark):
    _, _, truth = benchmark
    counts = truth.counts()
    for kind in ALL_KINDS:
        assert counts.get(kind, 0) >= 30, f"{kind}: {counts.get(kind, 0)}"


def test_benchmark_has_three_rate_profiles(benchmark):
    traces, _, _ = benchmark
    rates = {"v": set(), "p": set()}
    for tr in traces:
        t = np.array([s.timestamp_ms for s in tr.samples], dtype=np.int64)
        dt = float(np.median(np.diff(t)))
        rates[tr.trace_id[0]].add(round(1000.0 / dt))
    assert len(rates["v"]) == 3
    assert len(rates["p"]) == 3


def test_network_stays_compact(benchmark):
    _, net, truth = benchmark
    assert truth.network_length_m == pytest.approx(network_length_m(net))
    assert truth.network_length_m <= 5000.0


def test_all_traces_validate(benchmark):
    traces, _, _ = benchmark
    for tr in traces:
        validate_trace(tr)


def test_truth_json_round_trip(tmp_path, benchmark):
    _, _, truth = benchmark
    path = tmp_path / "truth.json"
    write_truth_json(truth, path)
    again = read_truth_json(path)
    assert isinstance(again, GroundTruth)
    assert again.to_dict() == truth.to_dict()


def test_invalid_scenarios_are_refused(tmp_path):
    with pytest.raises(InvalidScenario):
        simulate_benchmark(-1)
    with pytest.raises(InvalidScenario):
        simulate_benchmark("zero")
    with pytest.raises(InvalidScenario):
        simulate_to_dir(tmp_path, seed=0, scenario="rush-hour")


def test_network_shape():
    net = build_network()
    kinds = {k for _, _, k in net.edges}
    assert "road" in kinds and "railway" in kinds
    assert len(net.intersections) >= 1
