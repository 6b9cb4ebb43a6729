"""
Core dataclasses used throughout AssetLocator.

Coordinates follow two conventions everywhere in the package:

- `GeoPoint` is WGS84 geographic, longitude signed (west negative).
- `ProjectedPoint` is State Plane California Zone 6 in US survey feet,
  `easting` playing the role of x and `northing` the role of y.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import datetime
from typing import Optional, Tuple

STOP_SIGN = "stop_sign"
FIRE_HYDRANT = "fire_hydrant"
KNOWN_OBJECT_CLASSES: Tuple[str, ...] = (STOP_SIGN, FIRE_HYDRANT)

_CLASS_ALIASES = {
    "stop": STOP_SIGN,
    "stopsign": STOP_SIGN,
    "hydrant": FIRE_HYDRANT,
    "firehydrant": FIRE_HYDRANT,
}


def normalize_object_class(raw: str) -> str:
    """Fold detector labels ("Stop Sign", "fire-hydrant", ...) onto class ids.

    Unknown labels pass through lower-cased with separators collapsed to
    underscores, so `other` classes survive as their own partition.
    """
    cleaned = "_".join(raw.strip().lower().replace("-", " ").split())
    if not cleaned:
        raise ValueError("object class must not be blank")
    return _CLASS_ALIASES.get(cleaned.replace("_", ""), cleaned)


@dataclass(frozen=True)
class GeoPoint:
    """WGS84 position; altitude in feet above sea level when known."""

    latitude: float
    longitude: float
    altitude: Optional[float] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.latitude) and math.isfinite(self.longitude)):
            raise ValueError("latitude/longitude must be finite")
        if not -90.0 <= self.latitude <= 90.0:
            raise ValueError(f"latitude {self.latitude} outside [-90, 90]")
        if not -180.0 <= self.longitude <= 180.0:
            raise ValueError(f"longitude {self.longitude} outside [-180, 180]")


@dataclass(frozen=True)
class ProjectedPoint:
    """State Plane CA Zone 6 (NAD83) coordinates in US survey feet."""

    easting: float
    northing: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.easting) and math.isfinite(self.northing)):
            raise ValueError("easting/northing must be finite")

    def offset(self, d_easting: float, d_northing: float) -> "ProjectedPoint":
        return ProjectedPoint(self.easting + d_easting, self.northing + d_northing)


@dataclass(frozen=True)
class CompassBearing:
    """Degrees clockwise from true north, always normalised to [0, 360)."""

    degrees: float

    def __init__(self, degrees: float):
        value = float(degrees)
        if not math.isfinite(value):
            raise ValueError("bearing must be finite")
        normalized = value % 360.0
        # Tiny negative inputs round up to exactly 360.0 under `%`.
        if normalized >= 360.0:
            normalized = 0.0
        object.__setattr__(self, "degrees", normalized)

    @property
    def radians(self) -> float:
        return math.radians(self.degrees)

    def __float__(self) -> float:
        return self.degrees


@dataclass(frozen=True)
class SensorLayout:
    """Physical offset between the GNSS antenna and the camera (feet)."""

    gps_to_camera_offset: float = 3.28084
    apply_lever_arm: bool = False

    def __post_init__(self) -> None:
        if self.gps_to_camera_offset < 0:
            raise ValueError("gps_to_camera_offset must be non-negative")


@dataclass(frozen=True)
class PhotoCapture:
    """One GNSS-stamped photosphere capture with its corrected heading."""

    capture_id: str
    dataset_id: str
    timestamp: datetime
    position: GeoPoint
    projected: ProjectedPoint
    heading: CompassBearing
    sequence_index: int
    image_id: str = ""

    @property
    def image_ref(self) -> str:
        return self.image_id or self.capture_id


@dataclass(frozen=True)
class Detection:
    """One detector hit inside one cardinal sub-image.

    `bbox` is `(x_min, y_min, x_max, y_max)` in slice pixels; `slice_size`
    is the slice edge length the box was measured against.
    """

    capture_ref: str
    cardinal_index: int
    object_class: str
    bbox: Tuple[float, float, float, float]
    confidence: float
    slice_size: int = 1000

    def __post_init__(self) -> None:
        x_min, y_min, x_max, y_max = self.bbox
        if not 0 <= x_min < x_max <= self.slice_size:
            raise ValueError(f"bbox x-range ({x_min}, {x_max}) outside slice")
        if not 0 <= y_min < y_max <= self.slice_size:
            raise ValueError(f"bbox y-range ({y_min}, {y_max}) outside slice")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError("confidence must be between 0 and 1")
        if self.cardinal_index < 1:
            raise ValueError("cardinal_index is 1-based")

    @property
    def center_x(self) -> float:
        return (self.bbox[0] + self.bbox[2]) / 2.0

    @property
    def width(self) -> float:
        return self.bbox[2] - self.bbox[0]


@dataclass(frozen=True)
class BearingObservation:
    """A half-line in the map plane: camera origin plus object direction."""

    origin: ProjectedPoint
    bearing: CompassBearing
    capture_ref: str
    object_class: str
    confidence: float
    sequence_index: int
    altitude: Optional[float] = None
    directional_code: str = ""


@dataclass(frozen=True)
class PairIntersection:
    """Triangulated candidate position from one pair of observations."""

    position: ProjectedPoint
    dist_a: float
    dist_b: float
    source_pair: Tuple[str, str]
    conditioning: float

    def __post_init__(self) -> None:
        if self.dist_a < 0 or self.dist_b < 0:
            raise ValueError("distances must be non-negative")
        if self.conditioning <= 0:
            raise ValueError("conditioning must be positive")


@dataclass(frozen=True)
class ObjectEstimate:
    """Final clustered object: mean position plus spread statistics.

    `mean_position` is None when every pair in the cluster was discarded;
    `diagnostic` then says why. Standard deviations are sample standard
    deviations (0 when a single value is available).
    """

    object_class: str
    mean_position: Optional[GeoPoint]
    mean_projected: Optional[ProjectedPoint]
    sigma_lat: float
    sigma_lon: float
    support_detections: int
    support_pairs: int
    mean_object_distance: float
    sd_object_distance: float
    mean_drive_step: float
    sd_drive_step: float
    cluster_id: int = 0
    dataset_id: str = ""
    best_directional_code: str = ""
    diagnostic: str = ""

    def __post_init__(self) -> None:
        if self.sigma_lat < 0 or self.sigma_lon < 0:
            raise ValueError("sigmas must be non-negative")

    @property
    def located(self) -> bool:
        return self.mean_position is not None
