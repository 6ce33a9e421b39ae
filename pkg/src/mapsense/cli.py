"""Command line interface.

Subcommands: simulate, classify, cluster, evaluate, export.  Exit codes:
0 on success, 2 on malformed input files (the message names the offending
file and line), 1 on any other pipeline error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .aggregation import FeatureRegistry, cluster_detections, features_to_geojson
from .config import PipelineConfig
from .errors import BadInput, MapSenseError
from .evaluation import evaluate_detections, evaluate_features
from .pipeline import (
    read_detections_jsonl,
    regulator_detections,
    run_pipeline,
    write_detections_jsonl,
)
from .simulator import read_truth_json, simulate_to_dir
from .trace import read_network_json, read_traces_jsonl


def _load_config(path) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    try:
        return PipelineConfig.from_json(path)
    except (ValueError, TypeError) as exc:
        raise BadInput(f"bad config: {exc}", path=str(path)) from exc


def _cmd_simulate(args):
    traces, net, truth = simulate_to_dir(args.out, seed=args.seed, scenario=args.scenario)
    print(f"wrote {len(traces)} traces, network, and truth to {args.out}")
    return 0


def _cmd_classify(args):
    cfg = _load_config(args.config)
    traces = read_traces_jsonl(args.traces)
    net = read_network_json(args.network)
    result = run_pipeline(traces, net, cfg)
    write_detections_jsonl(result.detections, args.out)
    for trace_id, reason in result.skipped:
        print(f"skipped {trace_id}: {reason}", file=sys.stderr)
    print(f"wrote {len(result.detections)} detections to {args.out}")
    return 0


def _cmd_cluster(args):
    cfg = _load_config(args.config)
    detections = read_detections_jsonl(args.detections)
    features = cluster_detections(detections, cfg)
    doc = features_to_geojson(features, cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(f"wrote {len(features)} features to {args.out}")
    return 0


def _cmd_evaluate(args):
    cfg = _load_config(args.config)
    truth = read_truth_json(args.truth)
    detections = read_detections_jsonl(args.detections)
    report = evaluate_detections(detections, truth, cfg)
    print(report.to_text())
    if args.features:
        with open(args.features, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
        feature_report = evaluate_features(doc, truth, cfg)
        print()
        print(feature_report.to_text())
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_json())
        print(f"wrote report to {args.out}")
    return 0


def _cmd_export(args):
    cfg = _load_config(args.config)
    registry = FeatureRegistry(cfg, path=args.registry)
    doc = features_to_geojson(registry.emitted_features(), cfg)
    with open(args.out, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
    print(f"wrote {len(doc['features'])} features to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mapsense",
        description="Crowd-sensed map semantics: simulate, classify, cluster, evaluate, export.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate benchmark traces with ground truth")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--scenario", default="benchmark")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("classify", help="run the per-trace classifiers over a trace file")
    p.add_argument("--traces", required=True, help="traces JSONL file")
    p.add_argument("--network", required=True, help="road network JSON file")
    p.add_argument("--out", required=True, help="detections JSONL output")
    p.add_argument("--config", default=None, help="pipeline config JSON")
    p.set_defaults(func=_cmd_classify)

    p = sub.add_parser("cluster", help="cluster detections into aggregate map features")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True, help="GeoJSON output")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("evaluate", help="score detections (and optionally features) against truth")
    p.add_argument("--detections", required=True)
    p.add_argument("--truth", required=True)
    p.add_argument("--features", default=None, help="clustered features GeoJSON")
    p.add_argument("--out", default=None, help="JSON report output")
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("export", help="export a feature registry as GeoJSON")
    p.add_argument("--registry", required=True, help="registry JSONL file")
    p.add_argument("--out", required=True)
    p.add_argument("--config", default=None)
    p.set_defaults(func=_cmd_export)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except BadInput as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except MapSenseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
