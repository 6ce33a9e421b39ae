"""End-to-end command line flow and exit codes."""

import json

import pytest

from mapsense.cli import main
from mapsense.config import PipelineConfig


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--out", str(d / "sim"), "--seed", "0"]) == 0
    return d


def test_full_flow_exit_codes_and_outputs(workdir, capsys):
    d = workdir
    sim = d / "sim"
    assert (sim / "traces.jsonl").exists()
    assert (sim / "network.json").exists()
    assert (sim / "truth.json").exists()

    assert main([
        "classify",
        "--traces", str(sim / "traces.jsonl"),
        "--network", str(sim / "network.json"),
        "--out", str(d / "detections.jsonl"),
    ]) == 0

    assert main([
        "cluster",
        "--detections", str(d / "detections.jsonl"),
        "--out", str(d / "features.geojson"),
    ]) == 0
    doc = json.loads((d / "features.geojson").read_text())
    assert doc["type"] == "FeatureCollection"
    assert len(doc["features"]) > 0

    assert main([
        "evaluate",
        "--detections", str(d / "detections.jsonl"),
        "--truth", str(sim / "truth.json"),
        "--features", str(d / "features.geojson"),
        "--out", str(d / "report.json"),
    ]) == 0
    out = capsys.readouterr().out
    assert "vehicle overall" in out
    report = json.loads((d / "report.json").read_text())
    assert report["overall"]["vehicle"]["fp_rate"] <= 0.03

    # the detections log doubles as a registry log for export
    assert main([
        "export",
        "--registry", str(d / "detections.jsonl"),
        "--out", str(d / "registry.geojson"),
    ]) == 0
    exported = json.loads((d / "registry.geojson").read_text())
    assert exported["properties"]["config_digest"] == PipelineConfig().digest()
    assert len(exported["features"]) > 0


def test_malformed_traces_line_exits_2(tmp_path, capsys):
    bad = tmp_path / "traces.jsonl"
    bad.write_text('{"trace_id": "t", "timestamp_ms": 0}\nnot json\n')
    net = tmp_path / "net.json"
    net.write_text('{"nodes": {}, "edges": []}')
    code = main(["classify", "--traces", str(bad), "--network", str(net), "--out", str(tmp_path / "o")])
    assert code == 2
    err = capsys.readouterr().err
    assert ":2:" in err and "traces.jsonl" in err


def test_missing_input_file_exits_1(tmp_path, capsys):
    code = main([
        "classify",
        "--traces", str(tmp_path / "absent.jsonl"),
        "--network", str(tmp_path / "absent.json"),
        "--out", str(tmp_path / "o"),
    ])
    assert code == 1
    assert "error" in capsys.readouterr().err


def test_bad_config_exits_2(tmp_path, workdir, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text('{"no_such_threshold": 1}')
    code = main([
        "cluster",
        "--detections", str(workdir / "sim" / "traces.jsonl"),
        "--out", str(tmp_path / "o"),
        "--config", str(cfg),
    ])
    assert code == 2
    assert "no_such_threshold" in capsys.readouterr().err


def test_unknown_scenario_exits_1(tmp_path, capsys):
    code = main(["simulate", "--out", str(tmp_path / "sim"), "--scenario", "blizzard"])
    assert code == 1
    assert "blizzard" in capsys.readouterr().err
