"""
Closed-form intersection of two bearing observations in the E-N plane.

Compass bearings (clockwise from north) are turned into line slopes with
x = easting and y = northing, so a bearing b has slope cos(b) / sin(b).
Rays too close to due north/south are solved in axis-swapped coordinates.
Only the forward half of each ray is physical; the lines always meet
(unless parallel) but intersections behind either camera are rejected.
"""

from __future__ import annotations

import math
from typing import Tuple

from .models import BearingObservation, CompassBearing, PairIntersection, ProjectedPoint

DEFAULT_MIN_SEPARATION = 2.0
DEFAULT_VERTICAL_EPSILON = 0.05
SLOPE_TOLERANCE = 1e-12


class TriangulationError(ValueError):
    """A pair of observations cannot produce a position."""


class VerticalRay(TriangulationError):
    """Bearing within the vertical tolerance of due north or south."""


class ParallelRays(TriangulationError):
    """Bearings too close to each other (mod 180) to intersect reliably."""


class BehindSensor(TriangulationError):
    """Lines meet on the back-extension of at least one ray."""


def bearing_to_slope(
    bearing: CompassBearing, vertical_epsilon: float = DEFAULT_VERTICAL_EPSILON
) -> float:
    """Slope (d northing / d easting) of the line along `bearing`."""
    sin_b = math.sin(bearing.radians)
    if abs(sin_b) < math.sin(math.radians(vertical_epsilon)):
        raise VerticalRay(f"bearing {bearing.degrees:.6f} is within {vertical_epsilon} deg of N/S")
    return math.cos(bearing.radians) / sin_b


def pair_separation(a: CompassBearing, b: CompassBearing) -> float:
    """Angle between the two lines, folded to [0, 90]."""
    diff = abs(a.degrees - b.degrees) % 180.0
    return min(diff, 180.0 - diff)


def ray_distance(origin: ProjectedPoint, target: ProjectedPoint) -> float:
    return math.hypot(target.easting - origin.easting, target.northing - origin.northing)


def _ordering_key(obs: BearingObservation) -> tuple:
    return (
        obs.sequence_index,
        obs.capture_ref,
        obs.origin.easting,
        obs.origin.northing,
        obs.bearing.degrees,
    )


def _solve_lines(
    dx: float,
    dy: float,
    bearing_a: CompassBearing,
    bearing_b: CompassBearing,
    vertical_epsilon: float,
) -> Tuple[float, float]:
    """Intersection with A at the origin and B at (dx, dy), in the given axes."""
    slope_a = bearing_to_slope(bearing_a, vertical_epsilon)
    slope_b = bearing_to_slope(bearing_b, vertical_epsilon)
    if abs(slope_a - slope_b) < SLOPE_TOLERANCE:
        raise ParallelRays("slopes are numerically identical")
    x_c = (dy - slope_b * dx) / (slope_a - slope_b)
    return x_c, slope_a * x_c


def _swap(bearing: CompassBearing) -> CompassBearing:
    """Bearing of the same direction once easting and northing are exchanged."""
    return CompassBearing(90.0 - bearing.degrees)


def _steepness(bearing: CompassBearing) -> float:
    return abs(math.cos(bearing.radians)) - abs(math.sin(bearing.radians))


def _local_intersection(
    dx: float,
    dy: float,
    bearing_a: CompassBearing,
    bearing_b: CompassBearing,
    vertical_epsilon: float,
) -> Tuple[float, float]:
    swapped_first = max(_steepness(bearing_a), _steepness(bearing_b)) > 0
    for swapped in (swapped_first, not swapped_first):
        try:
            if swapped:
                y_c, x_c = _solve_lines(
                    dy, dx, _swap(bearing_a), _swap(bearing_b), vertical_epsilon
                )
                return x_c, y_c
            return _solve_lines(dx, dy, bearing_a, bearing_b, vertical_epsilon)
        except VerticalRay:
            continue
    # One ray runs N/S and the other E/W, so each frame has a singular ray.
    # The steep ray is written as x = k * y and the shallow one as y = m * x.
    if abs(math.sin(bearing_a.radians)) < abs(math.sin(bearing_b.radians)):
        k_a = math.sin(bearing_a.radians) / math.cos(bearing_a.radians)
        m_b = bearing_to_slope(bearing_b, vertical_epsilon)
        y_c = (dy - m_b * dx) / (1.0 - m_b * k_a)
        return k_a * y_c, y_c
    k_b = math.sin(bearing_b.radians) / math.cos(bearing_b.radians)
    m_a = bearing_to_slope(bearing_a, vertical_epsilon)
    x_c = (dx - k_b * dy) / (1.0 - k_b * m_a)
    return x_c, m_a * x_c


def _forward_parameter(dx: float, dy: float, bearing: CompassBearing) -> float:
    return dx * math.sin(bearing.radians) + dy * math.cos(bearing.radians)


def intersect(
    a: BearingObservation,
    b: BearingObservation,
    *,
    min_separation: float = DEFAULT_MIN_SEPARATION,
    vertical_epsilon: float = DEFAULT_VERTICAL_EPSILON,
) -> PairIntersection:
    """Triangulate the point both observations look at.

    The pair is put in a canonical order and solved relative to the first
    origin, so `intersect(a, b)` and `intersect(b, a)` agree exactly.
    """
    separation = pair_separation(a.bearing, b.bearing)
    if separation < min_separation or separation <= 0:
        raise ParallelRays(
            f"{a.capture_ref}/{b.capture_ref}: separation {separation:.3f} deg below "
            f"{min_separation} deg"
        )
    first, second = (a, b) if _ordering_key(a) <= _ordering_key(b) else (b, a)
    dx = second.origin.easting - first.origin.easting
    dy = second.origin.northing - first.origin.northing
    if dx == 0 and dy == 0:
        raise TriangulationError(f"{a.capture_ref}/{b.capture_ref}: origins coincide")

    x_c, y_c = _local_intersection(dx, dy, first.bearing, second.bearing, vertical_epsilon)
    if _forward_parameter(x_c, y_c, first.bearing) <= 0 or (
        _forward_parameter(x_c - dx, y_c - dy, second.bearing) <= 0
    ):
        raise BehindSensor(f"{a.capture_ref}/{b.capture_ref}: lines meet behind a camera")

    dist_first = math.hypot(x_c, y_c)
    dist_second = math.hypot(x_c - dx, y_c - dy)
    position = first.origin.offset(x_c, y_c)
    dist_a, dist_b = (dist_first, dist_second) if first is a else (dist_second, dist_first)
    return PairIntersection(
        position=position,
        dist_a=dist_a,
        dist_b=dist_b,
        source_pair=(a.capture_ref, b.capture_ref),
        conditioning=separation,
    )
