"""Geometry oracles: haversine, local projection, segment intersection."""

import math

import numpy as np
import pytest

from mapsense.geo import (
    EARTH_RADIUS_M,
    haversine_m,
    haversine_matrix_m,
    heading_between,
    local_xy,
    offset_latlon,
    project_onto_segment,
    segments_intersect,
    wrap_angle,
    xy_to_latlon,
)


def _spherical_law_of_cosines(a, b):
    """Independent great-circle oracle (stable enough above ~1 m)."""
    p1, l1 = math.radians(a[0]), math.radians(a[1])
    p2, l2 = math.radians(b[0]), math.radians(b[1])
    c = math.sin(p1) * math.sin(p2) + math.cos(p1) * math.cos(p2) * math.cos(l2 - l1)
    return EARTH_RADIUS_M * math.acos(max(-1.0, min(1.0, c)))


def test_haversine_against_law_of_cosines_oracle():
    rng = np.random.default_rng(11)
    for _ in range(200):
        a = (rng.uniform(-80, 80), rng.uniform(-180, 180))
        b = (a[0] + rng.uniform(-0.5, 0.5), a[1] + rng.uniform(-0.5, 0.5))
        d = haversine_m(a, b)
        oracle = _spherical_law_of_cosines(a, b)
        assert d == pytest.approx(oracle, abs=max(1e-6 * oracle, 1e-3))


def test_haversine_basics():
    assert haversine_m((40.0, -75.0), (40.0, -75.0)) == 0.0
    # one degree of latitude
    d = haversine_m((0.0, 0.0), (1.0, 0.0))
    assert d == pytest.approx(EARTH_RADIUS_M * math.pi / 180.0, rel=1e-12)
    # symmetry
    a, b = (40.1, -75.2), (40.3, -74.9)
    assert haversine_m(a, b) == pytest.approx(haversine_m(b, a), rel=1e-15)


def test_haversine_matrix_matches_scalar():
    rng = np.random.default_rng(3)
    lats = 40.0 + rng.uniform(-0.05, 0.05, 12)
    lons = -75.0 + rng.uniform(-0.05, 0.05, 12)
    mat = haversine_matrix_m(lats, lons)
    assert mat.shape == (12, 12)
    for i in range(12):
        for j in range(12):
            assert mat[i, j] == pytest.approx(
                haversine_m((lats[i], lons[i]), (lats[j], lons[j])), abs=1e-6
            )


def test_local_xy_round_trip():
    origin = (40.0, -75.0)
    rng = np.random.default_rng(5)
    lats = 40.0 + rng.uniform(-0.02, 0.02, 50)
    lons = -75.0 + rng.uniform(-0.02, 0.02, 50)
    x, y = local_xy(origin, lats, lons)
    lat2, lon2 = xy_to_latlon(origin, x, y)
    np.testing.assert_allclose(lat2, lats, atol=1e-12)
    np.testing.assert_allclose(lon2, lons, atol=1e-12)


def test_local_xy_agrees_with_haversine_at_city_scale():
    origin = (40.0, -75.0)
    p = offset_latlon(40.0, -75.0, 300.0, -400.0)
    x, y = local_xy(origin, np.array([p[0]]), np.array([p[1]]))
    planar = math.hypot(x[0], y[0])
    assert planar == pytest.approx(500.0, rel=1e-3)
    assert planar == pytest.approx(haversine_m(origin, p), rel=1e-3)


def test_project_onto_segment():
    a = (40.0, -75.0)
    b = offset_latlon(*a, 100.0, 0.0)     # 100 m east
    p = offset_latlon(*a, 30.0, 40.0)     # foot at 30 m east, 40 m off
    lat, lon, dist, t = project_onto_segment(p, a, b)
    assert dist == pytest.approx(40.0, rel=1e-3)
    assert t == pytest.approx(0.3, abs=1e-3)
    # beyond the end: clamps to the endpoint
    q = offset_latlon(*a, 150.0, 0.0)
    _, _, dist, t = project_onto_segment(q, a, b)
    assert t == 1.0
    assert dist == pytest.approx(50.0, rel=1e-3)


def _intersect_oracle(p1, p2, q1, q2):
    """Parametric solve oracle for proper (interior) crossings."""
    r = (p2[0] - p1[0], p2[1] - p1[1])
    s = (q2[0] - q1[0], q2[1] - q1[1])
    denom = r[0] * s[1] - r[1] * s[0]
    if denom == 0:
        return False
    qp = (q1[0] - p1[0], q1[1] - p1[1])
    t = (qp[0] * s[1] - qp[1] * s[0]) / denom
    u = (qp[0] * r[1] - qp[1] * r[0]) / denom
    return 0.0 < t < 1.0 and 0.0 < u < 1.0


def test_segments_intersect_against_parametric_oracle():
    rng = np.random.default_rng(17)
    agreements = 0
    for _ in range(500):
        pts = rng.uniform(-10, 10, 8)
        p1, p2, q1, q2 = (pts[0], pts[1]), (pts[2], pts[3]), (pts[4], pts[5]), (pts[6], pts[7])
        assert segments_intersect(p1, p2, q1, q2) == _intersect_oracle(p1, p2, q1, q2)
        agreements += 1
    assert agreements == 500


def test_heading_between_cardinal_directions():
    a = (40.0, -75.0)
    assert heading_between(a, offset_latlon(*a, 0.0, 100.0)) == pytest.approx(0.0, abs=1e-6)
    assert heading_between(a, offset_latlon(*a, 100.0, 0.0)) == pytest.approx(math.pi / 2, abs=1e-6)
    assert abs(heading_between(a, offset_latlon(*a, 0.0, -100.0))) == pytest.approx(math.pi, abs=1e-6)


def test_wrap_angle():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)   # (-pi, pi] convention
    assert wrap_angle(3 * math.pi / 2) == pytest.approx(-math.pi / 2)
    for k in range(-5, 6):
        assert wrap_angle(0.7 + 2 * math.pi * k) == pytest.approx(0.7, abs=1e-12)
