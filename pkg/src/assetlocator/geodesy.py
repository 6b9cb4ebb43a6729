"""
Geodesy helpers: WGS84 <-> State Plane California Zone 6 projection,
compass-bearing arithmetic and the GNSS heading correction.

The projection constants are the published Lambert conformal conic
definition of State Plane California Zone 6 (NAD83, US survey feet),
embedded as a PROJ string so the package never needs a network lookup.
WGS84 and NAD83 are treated as coincident: both sides use the GRS80
ellipsoid and no datum shift is applied.
"""

from __future__ import annotations

import logging
import math
import threading
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pyproj import CRS, Transformer
from pyproj.exceptions import ProjError

from .models import CompassBearing, GeoPoint, ProjectedPoint, SensorLayout

logger = logging.getLogger(__name__)

ZONE6_PROJ = (
    "+proj=lcc +lat_1=33.88333333333333 +lat_2=32.78333333333333 "
    "+lat_0=32.16666666666666 +lon_0=-116.25 +x_0=2000000.0001016 "
    "+y_0=500000.0001016001 +ellps=GRS80 +units=us-ft +no_defs +type=crs"
)
GEOGRAPHIC_PROJ = "+proj=longlat +ellps=GRS80 +no_defs +type=crs"

# Envelope of in-county projected output; used by tests and sanity checks.
ZONE6_EASTING_RANGE = (5.9e6, 7.7e6)
ZONE6_NORTHING_RANGE = (1.5e6, 2.9e6)

FEET_PER_MILE = 5280.0


class ZeroDisplacement(ValueError):
    """Both displacement components are zero (stationary vehicle)."""


class OutOfDomain(ValueError):
    """Input lies outside the domain of the Zone 6 projection."""


class NonConvergence(ValueError):
    """Inverse projection could not recover a latitude (corrupt input)."""


# ---------------------------------------------------------------------------
# Bearings
# ---------------------------------------------------------------------------


def correct_heading(delta_easting: float, delta_northing: float) -> CompassBearing:
    """Corrected heading from one fix-to-fix displacement.

    theta = deg(atan2(dE, dN)) - 180; negative values wrap by +360. The
    -180 term is applied literally: due-north motion yields 180 degrees.
    """
    if delta_easting == 0 and delta_northing == 0:
        raise ZeroDisplacement("cannot derive a heading from a zero displacement")
    theta = math.degrees(math.atan2(delta_easting, delta_northing)) - 180.0
    if theta < 0:
        theta = (theta + 360.0) % 360.0
    return CompassBearing(theta)


def bearing_add(bearing: CompassBearing, delta: float) -> CompassBearing:
    """Rotate a bearing by `delta` degrees, modulo 360."""
    if not math.isfinite(delta):
        raise ValueError("bearing delta must be finite")
    return CompassBearing(bearing.degrees + delta)


def signed_difference(a: CompassBearing, b: CompassBearing) -> float:
    """Return `a - b` folded into (-180, 180]."""
    diff = (a.degrees - b.degrees) % 360.0
    return diff - 360.0 if diff > 180.0 else diff


def bearing_between(origin: ProjectedPoint, target: ProjectedPoint) -> CompassBearing:
    """Compass bearing of `target` as seen from `origin` in the E-N plane."""
    d_e = target.easting - origin.easting
    d_n = target.northing - origin.northing
    if d_e == 0 and d_n == 0:
        raise ZeroDisplacement("origin and target coincide")
    return CompassBearing(math.degrees(math.atan2(d_e, d_n)))


def derive_headings(points: Sequence[ProjectedPoint]) -> List[CompassBearing]:
    """Corrected headings for a track, one per point.

    Capture k uses the displacement from capture k-1 to k. The first
    capture inherits the second's heading and stationary captures reuse
    the closest earlier heading (or the next one when none exists yet).
    """
    if len(points) < 2:
        raise ZeroDisplacement("at least two fixes are needed to derive a heading")
    headings: List[Optional[CompassBearing]] = [None]
    for previous, current in zip(points, points[1:]):
        try:
            headings.append(
                correct_heading(
                    current.easting - previous.easting,
                    current.northing - previous.northing,
                )
            )
        except ZeroDisplacement:
            headings.append(None)
    for idx in range(1, len(headings)):
        if headings[idx] is None and headings[idx - 1] is not None:
            headings[idx] = headings[idx - 1]
    for idx in range(len(headings) - 2, -1, -1):
        if headings[idx] is None:
            headings[idx] = headings[idx + 1]
    if headings[0] is None:
        raise ZeroDisplacement("track never moves; no heading can be derived")
    return [heading for heading in headings if heading is not None]


def camera_origin(
    point: ProjectedPoint,
    heading: CompassBearing,
    sensor: SensorLayout,
) -> ProjectedPoint:
    """Camera position for a GNSS fix.

    With the lever arm enabled the origin is shifted `gps_to_camera_offset`
    feet along heading + 180; otherwise the fix is returned unchanged.
    """
    if not sensor.apply_lever_arm or sensor.gps_to_camera_offset == 0:
        return point
    direction = math.radians(heading.degrees + 180.0)
    offset = sensor.gps_to_camera_offset
    return point.offset(offset * math.sin(direction), offset * math.cos(direction))


# ---------------------------------------------------------------------------
# Projection
# ---------------------------------------------------------------------------

_local = threading.local()


def _transformers() -> Tuple[Transformer, Transformer]:
    """Per-thread forward/inverse transformers (pyproj objects are not shared)."""
    cached = getattr(_local, "transformers", None)
    if cached is None:
        geographic = CRS.from_proj4(GEOGRAPHIC_PROJ)
        zone6 = CRS.from_proj4(ZONE6_PROJ)
        cached = (
            Transformer.from_crs(geographic, zone6, always_xy=True),
            Transformer.from_crs(zone6, geographic, always_xy=True),
        )
        _local.transformers = cached
    return cached


def project_many(
    latitudes: Sequence[float] | np.ndarray,
    longitudes: Sequence[float] | np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised forward projection; returns (eastings, northings) in feet."""
    lat = np.asarray(latitudes, dtype=float)
    lon = np.asarray(longitudes, dtype=float)
    if lat.shape != lon.shape:
        raise ValueError("latitude and longitude arrays must have the same shape")
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise OutOfDomain("non-finite latitude/longitude")
    if np.any(np.abs(lat) >= 90.0):
        raise OutOfDomain("latitude at or beyond a pole cannot be projected")
    forward, _ = _transformers()
    try:
        eastings, northings = forward.transform(lon, lat, errcheck=True)
    except ProjError as exc:
        raise OutOfDomain(f"projection failed: {exc}") from exc
    return np.asarray(eastings, dtype=float), np.asarray(northings, dtype=float)


def unproject_many(
    eastings: Sequence[float] | np.ndarray,
    northings: Sequence[float] | np.ndarray,
) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorised inverse projection; returns (latitudes, longitudes)."""
    east = np.asarray(eastings, dtype=float)
    north = np.asarray(northings, dtype=float)
    if east.shape != north.shape:
        raise ValueError("easting and northing arrays must have the same shape")
    if not (np.all(np.isfinite(east)) and np.all(np.isfinite(north))):
        raise NonConvergence("non-finite easting/northing")
    _, inverse = _transformers()
    try:
        longitudes, latitudes = inverse.transform(east, north, errcheck=True)
    except ProjError as exc:
        raise NonConvergence(f"inverse projection failed: {exc}") from exc
    lat = np.asarray(latitudes, dtype=float)
    lon = np.asarray(longitudes, dtype=float)
    if not (np.all(np.isfinite(lat)) and np.all(np.isfinite(lon))):
        raise NonConvergence("inverse projection produced non-finite output")
    return lat, lon


def project(point: GeoPoint) -> ProjectedPoint:
    """Forward Lambert conformal conic into State Plane CA Zone 6 feet."""
    eastings, northings = project_many([point.latitude], [point.longitude])
    return ProjectedPoint(float(eastings[0]), float(northings[0]))


def unproject(point: ProjectedPoint, altitude: Optional[float] = None) -> GeoPoint:
    """Inverse of `project`; altitude is carried through untouched."""
    latitudes, longitudes = unproject_many([point.easting], [point.northing])
    return GeoPoint(float(latitudes[0]), float(longitudes[0]), altitude)


def planar_distance(a: ProjectedPoint, b: ProjectedPoint) -> float:
    return math.hypot(b.easting - a.easting, b.northing - a.northing)
