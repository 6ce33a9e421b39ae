"""The shared semantic-detection record emitted by both classifiers."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class Detection:
    """One classifier firing: a semantic kind at a location with provenance."""

    kind: str
    lat: float
    lon: float
    weight: float = 1.0
    trace_id: str | None = None
    t_start_ms: int = 0
    t_end_ms: int = 0
    attributes: dict = field(default_factory=dict)

    def to_dict(self):
        d = {
            "kind": self.kind,
            "lat": self.lat,
            "lon": self.lon,
            "weight": self.weight,
            "t_start_ms": self.t_start_ms,
            "t_end_ms": self.t_end_ms,
        }
        if self.trace_id is not None:
            d["trace_id"] = self.trace_id
        if self.attributes:
            d["attributes"] = self.attributes
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            kind=str(d["kind"]),
            lat=float(d["lat"]),
            lon=float(d["lon"]),
            weight=float(d.get("weight", 1.0)),
            trace_id=d.get("trace_id"),
            t_start_ms=int(d.get("t_start_ms", 0)),
            t_end_ms=int(d.get("t_end_ms", 0)),
            attributes=dict(d.get("attributes", {})),
        )


def detection_weight(mean_accuracy_m: float) -> float:
    """Location weight from the reported accuracy; strictly decreasing, in (0, 1]."""
    return 1.0 / (1.0 + max(0.0, mean_accuracy_m))
