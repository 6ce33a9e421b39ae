"""Pipeline thresholds as one flat, versioned, overridable config document.

Every comparative rule in the classifiers ("high variance", "long span")
reads its cutoff from here.  Ratio thresholds compare against per-segment
baselines so they stay device independent; absolute values are documented
defaults and can be overridden per deployment via a flat JSON file.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, fields


@dataclass
class PipelineConfig:
    # preprocessing
    lowess_span: float = 0.1            # span fraction for generic smoothing
    smooth_window_s: float = 0.3        # time width of in-pipeline channel smoothing
    location_smooth_s: float = 8.0      # time width for smoothing location fixes
    window_s: float = 2.0
    window_overlap: float = 0.5
    rss_baseline_s: float = 60.0        # trailing window for the rolling RSS median
    min_window_samples: int = 4

    # indoor filtering / segmentation / mode tree
    indoor_accuracy_m: float = 100.0
    indoor_span_s: float = 30.0
    stop_speed_mps: float = 0.5
    ped_mean_speed_mps: float = 2.5
    ped_max_speed_mps: float = 4.0
    veh_mean_speed_mps: float = 4.0
    veh_max_speed_mps: float = 8.0
    osc_var_min: float = 0.2            # vertical accel variance band marking step oscillation
    osc_var_max: float = 30.0
    min_segment_s: float = 10.0

    # step detection
    step_k: float = 1.0                 # threshold = rolling mean + k * rolling std
    step_window_s: float = 2.0
    step_min_gap_s: float = 0.25

    # map matching
    snap_radius_m: float = 50.0

    # shared signal thresholds
    rss_drop_db: float = -10.0
    magnet_high_ratio: float = 4.0
    magnet_low_ratio: float = 2.0

    # pedestrian tree
    accel_low_ratio: float = 0.5        # below this fraction of walking variance = not stepping
    stairs_freq_ratio: float = 1.3      # steps-per-meter vs the walking baseline
    stairs_peak_ratio: float = 1.8      # descending-stairs peak vs walking median peak
    stairs_cadence_ratio: float = 0.95  # stairs run cadence cap vs walking cadence
    footbridge_max_walk_m: float = 30.0
    crosswalk_angle_deg: float = 60.0   # max deviation from perpendicular at a crossing
    lane_width_m: float = 3.5
    step_rise_m: float = 0.17

    # vehicle tree span bands and variance ratios
    short_max_m: float = 10.0
    railway_min_m: float = 10.0
    railway_max_m: float = 30.0
    bridge_min_m: float = 50.0
    bump_ratio: float = 10.0            # Y/Z gravity variance vs baseline
    railway_ratio: float = 3.0          # medium band lower edge; upper edge is bump_ratio
    catseye_x_ratio: float = 4.0        # X accel variance signature (calibration choice)
    anomaly_ratio: float = 3.0          # generic window flagging ratio
    updown_lobe_frac: float = 0.2
    updown_prominence: float = 2.0      # peak vs baseline std for the up-then-down test

    # heading features
    heading_rate_rad_s: float = 0.15
    turn_net_tol_deg: float = 25.0
    curve_excursion_deg: float = 20.0
    roundabout_excursion_deg: float = 50.0
    junction_radius_m: float = 40.0

    # traffic regulators
    slowdown_speed_mps: float = 3.0
    slowdown_min_s: float = 2.0         # how long the speed must stay low to count
    approach_m: float = 30.0
    approach_radius_m: float = 25.0
    min_traces: int = 5
    stop_ratio: float = 0.80            # inclusive: "at least 80%"
    light_ratio: float = 0.15           # inclusive: "at least 15%"
    regulator_offset_m: float = 8.0

    # clustering / aggregation
    eps_vehicle_m: float = 15.0
    eps_pedestrian_m: float = 8.0
    min_pts: int = 3
    min_support: int = 3

    # evaluation
    match_radius_m: float = 20.0

    def to_dict(self):
        return asdict(self)

    def to_json(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def from_dict(cls, d):
        known = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(known)
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path):
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def digest(self):
        """Short stable hash of the config, embedded in outputs."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:12]


PED_KINDS = ("underpass", "stairs", "escalator", "footbridge", "crosswalk")
VEH_KINDS = (
    "tunnel",
    "bridge",
    "bump",
    "cats_eye",
    "railway_crossing",
    "roundabout",
    "intersection_turn",
    "stop_sign",
    "traffic_light",
)
ALL_KINDS = PED_KINDS + VEH_KINDS


def eps_for_kind(kind, cfg: PipelineConfig):
    return cfg.eps_pedestrian_m if kind in PED_KINDS else cfg.eps_vehicle_m
