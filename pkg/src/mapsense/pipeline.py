"""End-to-end orchestration: traces in, detections and map features out.

Each trace is validated, stripped of indoor spans, rotated into the motion
frame, segmented by transportation mode, and fed to the matching semantic
classifier.  Intersection approach observations are pooled across traces
for the stop-sign / traffic-light rules, and everything is clustered into
aggregate map features at the end.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .aggregation import MapFeature, cluster_detections
from .config import PipelineConfig
from .errors import (
    AbstainMissingChannel,
    BadInput,
    DegenerateOrientation,
    InsufficientTraces,
    TraceRejected,
)
from .geo import haversine_m
from .pedestrian import (
    classify_ped_window,
    compute_ped_baselines,
    detect_ped_structures,
)
from .preprocess import MotionFrames, to_world_frames, window_features
from .segmentation import (
    PEDESTRIAN,
    VEHICLE,
    Fixes,
    accuracy_at,
    detect_steps,
    extract_fixes,
    filter_indoor,
    location_at,
    per_sample_speed,
    segment_and_classify_mode,
)
from .semantics import Detection, detection_weight
from .trace import RoadNetwork, Trace, validate_trace
from .vehicle import (
    BRIDGE,
    INTERSECTION_TURN,
    ROUNDABOUT,
    ApproachObservation,
    ApproachStats,
    classify_heading_feature,
    classify_veh_event,
    compute_vehicle_baselines,
    find_event_runs,
    find_heading_spans,
    infer_regulators,
    observe_approaches,
)


@dataclass
class PipelineResult:
    """Everything one pipeline run produced."""

    detections: list[Detection] = field(default_factory=list)
    features: list[MapFeature] = field(default_factory=list)
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (trace_id, reason)


def _slice_frames(frames: MotionFrames, i0: int, i1: int) -> MotionFrames:
    return MotionFrames(
        t_ms=frames.t_ms[i0:i1],
        accel=frames.accel[i0:i1],
        magnet=frames.magnet[i0:i1] if frames.magnet is not None else None,
        gravity=frames.gravity[i0:i1] if frames.gravity is not None else None,
        heading=frames.heading[i0:i1],
    )


def _segment_rss(fixes: Fixes, t0_ms, t1_ms, baseline_s):
    sel = (fixes.rss_t_ms >= t0_ms - int(baseline_s * 1000)) & (fixes.rss_t_ms <= t1_ms)
    return fixes.rss_t_ms[sel], fixes.rss_dbm[sel]


class _JunctionIndex:
    def __init__(self, net: RoadNetwork):
        self.names = list(net.intersections)
        self.coords = [net.nodes[n] for n in self.names]

    def nearest(self, lat, lon):
        if not self.names:
            return None, float("inf")
        dists = [haversine_m((lat, lon), c) for c in self.coords]
        i = int(np.argmin(dists))
        return self.names[i], dists[i]


def _classify_vehicle_segment(frames, fixes, speed, junctions, cfg, trace_id, detections):
    t0, t1 = int(frames.t_ms[0]), int(frames.t_ms[-1])
    rss_t, rss_v = _segment_rss(fixes, t0, t1, cfg.rss_baseline_s)
    windows = window_features(
        frames,
        rss_t_ms=rss_t,
        rss_dbm=rss_v,
        speed_mps=speed,
        window_s=cfg.window_s,
        overlap=cfg.window_overlap,
        rss_baseline_s=cfg.rss_baseline_s,
        min_window_samples=cfg.min_window_samples,
    )
    if not windows:
        return
    base = compute_vehicle_baselines(windows)

    for w_lo, w_hi in find_event_runs(windows, base, cfg):
        try:
            ev = classify_veh_event(windows, w_lo, w_hi, base, cfg)
        except AbstainMissingChannel:
            return
        if ev is None:
            continue
        t_loc = ev.t_feature_ms if ev.kind == BRIDGE else (ev.t_start_ms + ev.t_end_ms) // 2
        lat, lon = location_at(fixes, t_loc)
        attrs = {}
        if ev.span_length_m > 0:
            attrs["span_length_m"] = round(ev.span_length_m, 1)
        detections.append(
            Detection(
                kind=ev.kind,
                lat=lat,
                lon=lon,
                weight=detection_weight(accuracy_at(fixes, ev.t_start_ms, ev.t_end_ms)),
                trace_id=trace_id,
                t_start_ms=ev.t_start_ms,
                t_end_ms=ev.t_end_ms,
                attributes=attrs,
            )
        )

    for s0, s1 in find_heading_spans(frames.t_ms, frames.heading, cfg):
        h = np.unwrap(frames.heading[s0 : s1 + 1])
        net = h[-1] - h[0]
        if abs(net) > np.radians(cfg.curve_excursion_deg):
            # locate a turn where the heading passes halfway between its
            # entry and exit values, which pins the corner itself rather
            # than the midpoint of the padded span
            mid = h[0] + 0.5 * net
            cross = np.nonzero(np.diff(np.sign(h - mid)))[0]
            i_loc = int(cross[0]) + s0 if len(cross) else (s0 + s1) // 2
            tm = int(frames.t_ms[i_loc])
        else:
            tm = (int(frames.t_ms[s0]) + int(frames.t_ms[s1])) // 2
        lat, lon = location_at(fixes, tm)
        node, dist = junctions.nearest(lat, lon)
        at_junction = dist <= cfg.junction_radius_m
        kind = classify_heading_feature(
            frames.t_ms[s0 : s1 + 1] / 1000.0, frames.heading[s0 : s1 + 1], at_junction, cfg
        )
        if kind in (ROUNDABOUT, INTERSECTION_TURN) and at_junction:
            detections.append(
                Detection(
                    kind=kind,
                    lat=lat,
                    lon=lon,
                    weight=detection_weight(accuracy_at(fixes, frames.t_ms[s0], frames.t_ms[s1])),
                    trace_id=trace_id,
                    t_start_ms=int(frames.t_ms[s0]),
                    t_end_ms=int(frames.t_ms[s1]),
                    attributes={"intersection": node},
                )
            )


def _classify_pedestrian_segment(frames, fixes, speed, net, cfg, trace_id, detections):
    t0, t1 = int(frames.t_ms[0]), int(frames.t_ms[-1])
    rss_t, rss_v = _segment_rss(fixes, t0, t1, cfg.rss_baseline_s)
    windows = window_features(
        frames,
        rss_t_ms=rss_t,
        rss_dbm=rss_v,
        speed_mps=speed,
        window_s=cfg.window_s,
        overlap=cfg.window_overlap,
        rss_baseline_s=cfg.rss_baseline_s,
        min_window_samples=cfg.min_window_samples,
    )
    if not windows:
        return
    steps = detect_steps(frames.t_ms, frames.accel[:, 2], cfg)
    base = compute_ped_baselines(windows, steps, cfg)
    labels = []
    for w in windows:
        in_w = [(t, p) for t, p in steps if w.t_start_ms <= t < w.t_end_ms]
        labels.append(classify_ped_window(w, in_w, base, cfg))
    detections.extend(
        detect_ped_structures(windows, labels, steps, fixes, net, cfg, trace_id=trace_id, baselines=base)
    )


def classify_trace(trace: Trace, net: RoadNetwork, cfg: PipelineConfig | None = None):
    """Run one trace through the per-trace part of the pipeline.

    Returns (detections, approach_observations, skip_reason).  The skip
    reason is None when the trace was processed.
    """
    cfg = cfg or PipelineConfig()
    junctions = _JunctionIndex(net)
    detections: list[Detection] = []
    observations: list[ApproachObservation] = []

    try:
        validate_trace(trace)
    except TraceRejected as exc:
        return [], [], f"rejected: {exc}"

    for sub in filter_indoor(trace, cfg):
        fixes = extract_fixes(sub, cfg)
        if len(fixes) < 3:
            continue
        try:
            frames = to_world_frames(sub)
        except (AbstainMissingChannel, DegenerateOrientation) as exc:
            return [], [], f"abstained: {exc}"
        speed = per_sample_speed(sub, fixes)
        segments = segment_and_classify_mode(sub, frames, fixes, cfg)

        saw_vehicle = False
        for seg in segments:
            sub_frames = _slice_frames(frames, seg.start_idx, seg.end_idx)
            if len(sub_frames) < cfg.min_window_samples:
                continue
            sub_speed = speed[seg.start_idx : seg.end_idx]
            if seg.mode == VEHICLE:
                saw_vehicle = True
                _classify_vehicle_segment(
                    sub_frames, fixes, sub_speed, junctions, cfg, sub.trace_id, detections
                )
            elif seg.mode == PEDESTRIAN:
                _classify_pedestrian_segment(
                    sub_frames, fixes, sub_speed, net, cfg, sub.trace_id, detections
                )
        if saw_vehicle:
            observations.extend(observe_approaches(fixes, net, cfg, trace_id=sub.trace_id))
    return detections, observations, None


def regulator_detections(observations: list[ApproachObservation], cfg: PipelineConfig | None = None):
    """Pool approach observations across traces and emit regulator detections."""
    cfg = cfg or PipelineConfig()
    grouped: dict[tuple[str, str], list[ApproachObservation]] = {}
    for obs in observations:
        grouped.setdefault((obs.intersection, obs.approach), []).append(obs)

    stats = []
    for (node, ap), obs_list in sorted(grouped.items()):
        st = ApproachStats(intersection=node, approach=ap)
        for o in obs_list:
            st.add(o.slowed, o.trace_id)
        stats.append(st)

    try:
        results = infer_regulators(stats, cfg)
    except InsufficientTraces:
        return []

    detections = []
    for res in results:
        for ap_stats in res.approaches:
            for o in grouped[(res.intersection, ap_stats.approach)]:
                detections.append(
                    Detection(
                        kind=res.kind,
                        lat=o.lat,
                        lon=o.lon,
                        weight=1.0,
                        trace_id=o.trace_id,
                        t_start_ms=o.t_ms,
                        t_end_ms=o.t_ms,
                        attributes={"intersection": res.intersection, "approach": ap_stats.approach},
                    )
                )
    return detections


def run_pipeline(traces, net: RoadNetwork, cfg: PipelineConfig | None = None) -> PipelineResult:
    """Classify every trace, infer regulators, and cluster into map features."""
    cfg = cfg or PipelineConfig()
    result = PipelineResult()
    observations: list[ApproachObservation] = []
    for trace in traces:
        dets, obs, reason = classify_trace(trace, net, cfg)
        if reason is not None:
            result.skipped.append((trace.trace_id, reason))
            continue
        result.detections.extend(dets)
        observations.extend(obs)
    result.detections.extend(regulator_detections(observations, cfg))
    result.features = cluster_detections(result.detections, cfg)
    return result


# ---------------------------------------------------------------------------
# Detection file I/O

def write_detections_jsonl(detections, path):
    with open(path, "w", encoding="utf-8") as fh:
        for d in detections:
            fh.write(json.dumps(d.to_dict(), sort_keys=True, separators=(",", ":")) + "\n")


def read_detections_jsonl(path) -> list[Detection]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                out.append(Detection.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as exc:
                raise BadInput(f"malformed detection line: {exc}", path=str(path), line=lineno) from exc
    return out
