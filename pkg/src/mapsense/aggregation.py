"""Multi-trace aggregation: density clustering and a persistent feature map.

Detections from many traces are clustered per kind with a haversine DBSCAN,
combined into weighted centroid locations, and kept in an append-only
registry so new traces refine rather than rebuild the map.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .config import PipelineConfig, eps_for_kind
from .geo import haversine_m, haversine_matrix_m
from .semantics import Detection

NOISE = -1


def dbscan_haversine(lats, lons, eps_m: float, min_pts: int) -> np.ndarray:
    """DBSCAN over geographic points; returns a label per point (-1 = noise).

    Neighbor counts include the point itself.  Core points connect into
    clusters; border points join the cluster of their nearest core point,
    which keeps labels independent of input order.
    """
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    n = len(lats)
    if n == 0:
        return np.empty(0, dtype=int)
    dist = haversine_matrix_m(lats, lons)
    adj = dist <= eps_m
    counts = adj.sum(axis=1)
    core = counts >= min_pts

    labels = np.full(n, NOISE, dtype=int)
    cluster = 0
    for seed in np.where(core)[0]:
        if labels[seed] != NOISE:
            continue
        # flood fill across core points
        stack = [int(seed)]
        labels[seed] = cluster
        while stack:
            i = stack.pop()
            for j in np.where(adj[i] & core)[0]:
                if labels[j] == NOISE:
                    labels[j] = cluster
                    stack.append(int(j))
        cluster += 1
    # borders attach to their nearest core point
    for i in np.where(~core)[0]:
        near = np.where(adj[i] & core)[0]
        if len(near):
            labels[i] = labels[near[np.argmin(dist[i, near])]]
    return labels


def weighted_location(lats, lons, weights):
    """Weight-averaged coordinates; uniform weights when all are zero."""
    w = np.asarray(weights, dtype=float)
    if not np.any(w > 0):
        w = np.ones_like(w)
    w = w / w.sum()
    return float(np.dot(w, lats)), float(np.dot(w, lons))


def _merge_attributes(kind: str, attr_list: list[dict]) -> dict:
    """Combine per-detection attributes for one feature.

    Lane counts take the minimum (the shortest crossing bounds the width),
    counts and lengths take the median, everything else the latest value.
    """
    merged: dict = {}
    keys = sorted({k for a in attr_list for k in a})
    for key in keys:
        vals = [a[key] for a in attr_list if key in a]
        if key == "lane_count":
            merged[key] = int(min(vals))
        elif all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in vals):
            m = float(np.median(vals))
            merged[key] = int(round(m)) if key == "step_count" else round(m, 3)
        else:
            merged[key] = vals[-1]
    return merged


@dataclass
class MapFeature:
    """One aggregated map feature backed by clustered detections."""

    feature_id: str
    kind: str
    lat: float
    lon: float
    support: int
    emitted: bool
    attributes: dict = field(default_factory=dict)
    _lats: list = field(default_factory=list, repr=False)
    _lons: list = field(default_factory=list, repr=False)
    _weights: list = field(default_factory=list, repr=False)
    _attrs: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "feature_id": self.feature_id,
            "kind": self.kind,
            "lat": self.lat,
            "lon": self.lon,
            "support": self.support,
            "emitted": self.emitted,
            "attributes": self.attributes,
        }


class FeatureRegistry:
    """Append-only store of detections with derived aggregate features.

    Every accepted detection is one JSONL record; reloading replays the
    log so the derived state is reproducible.  A feature is emitted once
    its support reaches ``min_support`` and never retracted afterwards.
    """

    def __init__(self, cfg: PipelineConfig | None = None, path=None):
        self.cfg = cfg or PipelineConfig()
        self.path = path
        self.features: dict[str, MapFeature] = {}
        self._counter = 0
        if path is not None:
            try:
                with open(path, "r", encoding="utf-8") as fh:
                    for line in fh:
                        line = line.strip()
                        if line:
                            self._apply(Detection.from_dict(json.loads(line)))
            except FileNotFoundError:
                pass

    def upsert_detection(self, det: Detection) -> MapFeature:
        """Add one detection, appending to the log and updating features."""
        if self.path is not None:
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(det.to_dict(), sort_keys=True) + "\n")
        return self._apply(det)

    def _apply(self, det: Detection) -> MapFeature:
        eps = eps_for_kind(det.kind, self.cfg)
        best, best_d = None, eps
        for feat in self.features.values():
            if feat.kind != det.kind:
                continue
            d = haversine_m((feat.lat, feat.lon), (det.lat, det.lon))
            if d <= best_d:
                best, best_d = feat, d
        if best is None:
            self._counter += 1
            best = MapFeature(
                feature_id=f"{det.kind}-{self._counter:04d}",
                kind=det.kind, lat=det.lat, lon=det.lon,
                support=0, emitted=False,
            )
            self.features[best.feature_id] = best
        best._lats.append(det.lat)
        best._lons.append(det.lon)
        best._weights.append(det.weight)
        best._attrs.append(det.attributes)
        best.support = len(best._lats)
        best.lat, best.lon = weighted_location(best._lats, best._lons, best._weights)
        best.attributes = _merge_attributes(det.kind, best._attrs)
        if best.support >= self.cfg.min_support:
            best.emitted = True
        return best

    def emitted_features(self) -> list[MapFeature]:
        return sorted(
            (f for f in self.features.values() if f.emitted),
            key=lambda f: f.feature_id,
        )


def cluster_detections(detections: list[Detection], cfg: PipelineConfig | None = None) -> list[MapFeature]:
    """One-shot clustering of a detection batch into emitted map features."""
    cfg = cfg or PipelineConfig()
    features: list[MapFeature] = []
    by_kind: dict[str, list[Detection]] = {}
    for d in detections:
        by_kind.setdefault(d.kind, []).append(d)
    for kind in sorted(by_kind):
        dets = by_kind[kind]
        labels = dbscan_haversine(
            [d.lat for d in dets], [d.lon for d in dets],
            eps_for_kind(kind, cfg), cfg.min_pts,
        )
        for label in sorted(set(labels) - {NOISE}):
            members = [d for d, l in zip(dets, labels) if l == label]
            if len(members) < cfg.min_support:
                continue
            lat, lon = weighted_location(
                [d.lat for d in members], [d.lon for d in members],
                [d.weight for d in members],
            )
            features.append(MapFeature(
                feature_id=f"{kind}-{label + 1:04d}",
                kind=kind, lat=lat, lon=lon,
                support=len(members), emitted=True,
                attributes=_merge_attributes(kind, [d.attributes for d in members]),
            ))
    return features


def features_to_geojson(features: list[MapFeature], cfg: PipelineConfig | None = None) -> dict:
    """Emitted features as a GeoJSON FeatureCollection (lon, lat order)."""
    cfg = cfg or PipelineConfig()
    return {
        "type": "FeatureCollection",
        "properties": {"config_digest": cfg.digest()},
        "features": [
            {
                "type": "Feature",
                "geometry": {"type": "Point", "coordinates": [round(f.lon, 7), round(f.lat, 7)]},
                "properties": {
                    "feature_id": f.feature_id,
                    "kind": f.kind,
                    "support": f.support,
                    **f.attributes,
                },
            }
            for f in features
        ],
    }
