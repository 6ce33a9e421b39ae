"""Scoring detections and aggregated features against ground truth.

Per-trace detections are matched to per-agent truth spans by kind, trace,
and distance; unmatched spans count as misses, unmatched detections as
false positives.  Aggregated map features are matched to placed truth
features the same way (without the trace constraint).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import PED_KINDS, VEH_KINDS, PipelineConfig
from .errors import ProvenanceMismatch
from .geo import haversine_m
from .semantics import Detection

UNCLASSIFIED = "unclassified"


@dataclass
class KindStats:
    truth_count: int = 0
    matched: int = 0
    missed: int = 0
    spurious: int = 0

    @property
    def fp_rate(self):
        return self.spurious / self.truth_count if self.truth_count else 0.0

    @property
    def fn_rate(self):
        return self.missed / self.truth_count if self.truth_count else 0.0


@dataclass
class EvaluationReport:
    per_kind: dict[str, KindStats] = field(default_factory=dict)
    confusion: dict[str, dict[str, int]] = field(default_factory=dict)
    feature_matches: list[dict] = field(default_factory=list)
    feature_missed: list[str] = field(default_factory=list)
    feature_spurious: list[str] = field(default_factory=list)

    def _group(self, kinds):
        truth = sum(self.per_kind[k].truth_count for k in kinds if k in self.per_kind)
        miss = sum(self.per_kind[k].missed for k in kinds if k in self.per_kind)
        spur = sum(self.per_kind[k].spurious for k in kinds if k in self.per_kind)
        if truth == 0:
            return 0.0, 0.0
        return spur / truth, miss / truth

    @property
    def vehicle_fp_fn(self):
        return self._group(VEH_KINDS)

    @property
    def pedestrian_fp_fn(self):
        return self._group(PED_KINDS)

    def to_dict(self):
        vfp, vfn = self.vehicle_fp_fn
        pfp, pfn = self.pedestrian_fp_fn
        return {
            "per_kind": {
                k: {
                    "truth": s.truth_count,
                    "matched": s.matched,
                    "missed": s.missed,
                    "spurious": s.spurious,
                    "fp_rate": round(s.fp_rate, 4),
                    "fn_rate": round(s.fn_rate, 4),
                }
                for k, s in sorted(self.per_kind.items())
            },
            "confusion": {k: dict(v) for k, v in sorted(self.confusion.items())},
            "overall": {
                "vehicle": {"fp_rate": round(vfp, 4), "fn_rate": round(vfn, 4)},
                "pedestrian": {"fp_rate": round(pfp, 4), "fn_rate": round(pfn, 4)},
            },
            "features": {
                "matched": self.feature_matches,
                "missed": self.feature_missed,
                "spurious": self.feature_spurious,
            },
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def to_text(self):
        lines = []
        header = f"{'kind':<18}{'truth':>6}{'match':>6}{'miss':>6}{'spur':>6}{'fp':>8}{'fn':>8}"
        lines.append(header)
        lines.append("-" * len(header))
        for k, s in sorted(self.per_kind.items()):
            lines.append(
                f"{k:<18}{s.truth_count:>6}{s.matched:>6}{s.missed:>6}{s.spurious:>6}"
                f"{s.fp_rate:>8.3f}{s.fn_rate:>8.3f}"
            )
        vfp, vfn = self.vehicle_fp_fn
        pfp, pfn = self.pedestrian_fp_fn
        lines.append("-" * len(header))
        lines.append(f"{'vehicle overall':<18}{'':>24}{vfp:>8.3f}{vfn:>8.3f}")
        lines.append(f"{'pedestrian overall':<18}{'':>24}{pfp:>8.3f}{pfn:>8.3f}")
        if self.feature_matches or self.feature_missed or self.feature_spurious:
            lines.append("")
            lines.append(
                f"map features: {len(self.feature_matches)} matched, "
                f"{len(self.feature_missed)} missed, {len(self.feature_spurious)} spurious"
            )
        return "\n".join(lines)


def _base_trace_id(trace_id):
    if trace_id is None:
        return None
    return trace_id.split("#", 1)[0]


def evaluate_detections(detections: list[Detection], truth, cfg: PipelineConfig | None = None) -> EvaluationReport:
    """Match per-trace detections against per-agent truth spans.

    ``truth`` is a simulator GroundTruth.  A detection matches a span when
    the kind and (base) trace id agree and the locations are within the
    match radius; each detection matches at most one span.
    """
    cfg = cfg or PipelineConfig()
    report = EvaluationReport()
    used = [False] * len(detections)

    kinds = sorted({s.kind for s in truth.spans} | {d.kind for d in detections})
    for k in kinds:
        report.per_kind.setdefault(k, KindStats())
        report.confusion.setdefault(k, {})

    by_key: dict[tuple[str, str], list[int]] = {}
    for i, d in enumerate(detections):
        by_key.setdefault((d.kind, _base_trace_id(d.trace_id)), []).append(i)

    for span in truth.spans:
        st = report.per_kind[span.kind]
        st.truth_count += 1
        cand = by_key.get((span.kind, span.trace_id), [])
        best, best_d = None, cfg.match_radius_m
        for i in cand:
            if used[i]:
                continue
            d = haversine_m((span.lat, span.lon), (detections[i].lat, detections[i].lon))
            if d <= best_d:
                best, best_d = i, d
        if best is not None:
            used[best] = True
            st.matched += 1
            report.confusion[span.kind][span.kind] = report.confusion[span.kind].get(span.kind, 0) + 1
            continue
        st.missed += 1
        # was something else reported here instead?
        confused_with = UNCLASSIFIED
        for i, d in enumerate(detections):
            if used[i] or d.kind == span.kind or _base_trace_id(d.trace_id) != span.trace_id:
                continue
            if haversine_m((span.lat, span.lon), (d.lat, d.lon)) <= cfg.match_radius_m:
                confused_with = d.kind
                used[i] = True
                break
        report.confusion[span.kind][confused_with] = report.confusion[span.kind].get(confused_with, 0) + 1

    for i, d in enumerate(detections):
        if not used[i]:
            report.per_kind[d.kind].spurious += 1
    return report


def evaluate_features(features, truth, cfg: PipelineConfig | None = None) -> EvaluationReport:
    """Match aggregated map features against placed truth features.

    ``features`` may be MapFeature objects or a GeoJSON FeatureCollection
    dict produced by the exporter.  When a GeoJSON document carries a
    config digest that differs from the active configuration, the
    comparison is refused with ProvenanceMismatch.
    """
    cfg = cfg or PipelineConfig()
    items = []
    if isinstance(features, dict):
        digest = features.get("properties", {}).get("config_digest")
        if digest is not None and digest != cfg.digest():
            raise ProvenanceMismatch(
                f"features were exported with config digest {digest}, active is {cfg.digest()}"
            )
        for f in features.get("features", []):
            lon, lat = f["geometry"]["coordinates"]
            props = dict(f.get("properties", {}))
            items.append((props.pop("kind"), float(lat), float(lon), props))
    else:
        for f in features:
            items.append((f.kind, f.lat, f.lon, dict(f.attributes)))

    report = EvaluationReport()
    used = [False] * len(items)
    for k in sorted({t.kind for t in truth.features} | {it[0] for it in items}):
        report.per_kind.setdefault(k, KindStats())
        report.confusion.setdefault(k, {})

    for tf in truth.features:
        st = report.per_kind[tf.kind]
        st.truth_count += 1
        best, best_d = None, cfg.match_radius_m
        for i, (kind, lat, lon, _props) in enumerate(items):
            if used[i] or kind != tf.kind:
                continue
            d = haversine_m((tf.lat, tf.lon), (lat, lon))
            if d <= best_d:
                best, best_d = i, d
        if best is None:
            st.missed += 1
            report.feature_missed.append(tf.kind)
            report.confusion[tf.kind][UNCLASSIFIED] = report.confusion[tf.kind].get(UNCLASSIFIED, 0) + 1
            continue
        used[best] = True
        st.matched += 1
        report.confusion[tf.kind][tf.kind] = report.confusion[tf.kind].get(tf.kind, 0) + 1
        report.feature_matches.append(
            {
                "kind": tf.kind,
                "location_error_m": round(best_d, 2),
                "truth_attributes": tf.attributes,
                "attributes": items[best][3],
            }
        )
    for i, (kind, _lat, _lon, _props) in enumerate(items):
        if not used[i]:
            report.per_kind[kind].spurious += 1
            report.feature_spurious.append(kind)
    return report


def location_error_curve(groups, sizes=(3, 5, 10, 15)):
    """Weighted-centroid location error as a function of sample count.

    ``groups`` is a list of ((truth_lat, truth_lon), observations) pairs
    where each observation is (lat, lon, weight).  For each requested size
    n, every group with at least n observations contributes the distance
    between its truth point and the weighted centroid of its first n
    observations.  Returns {n: mean_error_m or None}.
    """
    out = {}
    for n in sizes:
        errors = []
        for (tlat, tlon), obs in groups:
            if len(obs) < n:
                continue
            sel = obs[:n]
            w = np.array([o[2] for o in sel], dtype=float)
            if not np.any(w > 0):
                w = np.ones(len(sel))
            w = w / w.sum()
            clat = float(np.dot(w, [o[0] for o in sel]))
            clon = float(np.dot(w, [o[1] for o in sel]))
            errors.append(haversine_m((tlat, tlon), (clat, clon)))
        out[n] = float(np.mean(errors)) if errors else None
    return out


def detection_groups(detections: list[Detection], truth, cfg: PipelineConfig | None = None):
    """Group detections by nearest same-kind truth feature for the error curve."""
    cfg = cfg or PipelineConfig()
    groups = []
    for tf in truth.features:
        obs = [
            (d.lat, d.lon, d.weight)
            for d in detections
            if d.kind == tf.kind and haversine_m((tf.lat, tf.lon), (d.lat, d.lon)) <= cfg.match_radius_m
        ]
        groups.append(((tf.lat, tf.lon), obs))
    return groups
