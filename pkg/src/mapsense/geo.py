"""Distance and small-area planar geometry on WGS84 coordinates.

All distances use the haversine great-circle formula on the WGS84
equatorial radius.  At city scale (< 10 km) a local equirectangular
plane is used for projections; the error is negligible against the
localization noise we deal with.
"""

from __future__ import annotations

import math

import numpy as np

# WGS84 equatorial radius; 1 degree of longitude at the equator ~ 111319.5 m
EARTH_RADIUS_M = 6378137.0

_DEG = math.pi / 180.0


def haversine_m(a, b):
    """Great-circle distance in meters between (lat, lon) pairs."""
    lat1, lon1 = a
    lat2, lon2 = b
    phi1 = lat1 * _DEG
    phi2 = lat2 * _DEG
    dphi = (lat2 - lat1) * _DEG
    dlmb = (lon2 - lon1) * _DEG
    h = math.sin(dphi / 2.0) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(h)))


def haversine_matrix_m(lats, lons):
    """Pairwise haversine distance matrix (meters) for coordinate arrays."""
    phi = np.asarray(lats, dtype=float) * _DEG
    lmb = np.asarray(lons, dtype=float) * _DEG
    dphi = phi[:, None] - phi[None, :]
    dlmb = lmb[:, None] - lmb[None, :]
    h = np.sin(dphi / 2.0) ** 2 + np.cos(phi)[:, None] * np.cos(phi)[None, :] * np.sin(dlmb / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(h)))


def offset_latlon(lat, lon, east_m, north_m):
    """Move a point by local east/north meters (small-offset approximation)."""
    dlat = north_m / (EARTH_RADIUS_M * _DEG)
    dlon = east_m / (EARTH_RADIUS_M * _DEG * math.cos(lat * _DEG))
    return lat + dlat, lon + dlon


def local_xy(origin, lats, lons):
    """Project (lat, lon) arrays to a local east/north plane in meters."""
    lat0, lon0 = origin
    lats = np.asarray(lats, dtype=float)
    lons = np.asarray(lons, dtype=float)
    x = (lons - lon0) * _DEG * EARTH_RADIUS_M * math.cos(lat0 * _DEG)
    y = (lats - lat0) * _DEG * EARTH_RADIUS_M
    return x, y


def xy_to_latlon(origin, x, y):
    """Inverse of :func:`local_xy`."""
    lat0, lon0 = origin
    lat = lat0 + np.asarray(y, dtype=float) / (EARTH_RADIUS_M * _DEG)
    lon = lon0 + np.asarray(x, dtype=float) / (EARTH_RADIUS_M * _DEG * math.cos(lat0 * _DEG))
    return lat, lon


def project_onto_segment(p, a, b):
    """Orthogonal projection of point p onto segment a-b (all lat/lon).

    Returns (lat, lon, distance_m, t) where t in [0, 1] is the position of
    the foot along the segment.  Computed in the local plane around p.
    """
    px, py = 0.0, 0.0
    ax, ay = local_xy(p, np.array([a[0]]), np.array([a[1]]))
    bx, by = local_xy(p, np.array([b[0]]), np.array([b[1]]))
    ax, ay, bx, by = ax[0], ay[0], bx[0], by[0]
    dx, dy = bx - ax, by - ay
    seg2 = dx * dx + dy * dy
    if seg2 == 0.0:
        t = 0.0
    else:
        t = ((px - ax) * dx + (py - ay) * dy) / seg2
        t = min(1.0, max(0.0, t))
    fx, fy = ax + t * dx, ay + t * dy
    dist = math.hypot(fx - px, fy - py)
    lat, lon = xy_to_latlon(p, fx, fy)
    return float(lat), float(lon), dist, t


def segments_intersect(p1, p2, q1, q2):
    """True if 2D segments p1-p2 and q1-q2 intersect (local plane coords)."""

    def orient(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    d1 = orient(q1, q2, p1)
    d2 = orient(q1, q2, p2)
    d3 = orient(p1, p2, q1)
    d4 = orient(p1, p2, q2)
    if ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)):
        return True
    return False


def heading_between(a, b):
    """Course in radians (0 = north, clockwise) from point a to point b."""
    x, y = local_xy(a, np.array([b[0]]), np.array([b[1]]))
    return math.atan2(x[0], y[0])


def wrap_angle(rad):
    """Wrap an angle to (-pi, pi]."""
    out = math.fmod(rad + math.pi, 2.0 * math.pi)
    if out <= 0.0:
        out += 2.0 * math.pi
    return out - math.pi
