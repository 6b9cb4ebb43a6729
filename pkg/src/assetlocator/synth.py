"""
Synthetic drive-by scenes with analytically exact detections.

A scene is a GNSS track (straight and curved segments, one capture per
`step_ft`) plus point objects planted beside it. For every capture the
ground-truth detector emits, per visible object, a bbox whose centre column
looks exactly at the object (optionally with Gaussian bearing noise and
pixel quantisation) and whose width matches the object's physical width at
that distance. Positions, headings and detections are written to disk in
the same formats the pipeline reads, so a scene closes the loop over every
stage.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .cluster import ClusterGroup, ClusterParams, NoValidPairs, estimate_cluster
from .configuration import DEFAULT_OBJECT_WIDTHS, FALLBACK_OBJECT_WIDTH
from .detectors.mock import dump_ground_truth
from .geodesy import (
    bearing_between,
    camera_origin,
    derive_headings,
    planar_distance,
    project,
    project_many,
    unproject_many,
)
from .imaging import ImagingConfig, bearing_column, pixel_bearing
from .models import (
    FIRE_HYDRANT,
    STOP_SIGN,
    BearingObservation,
    CompassBearing,
    Detection,
    GeoPoint,
    ObjectEstimate,
    PhotoCapture,
    ProjectedPoint,
    SensorLayout,
    normalize_object_class,
)
from .storage import DatasetPaths, read_json, write_json, write_text

logger = logging.getLogger(__name__)

HEADING_DERIVED = "derived"
HEADING_INERTIAL = "inertial"
HEADING_MODES = (HEADING_DERIVED, HEADING_INERTIAL)

DEFAULT_ORIGIN = GeoPoint(33.8144, -117.9674, 300.0)
DEFAULT_START_TIME = datetime(2020, 1, 1, tzinfo=timezone.utc)
DEFAULT_MIN_OBJECT_SPACING = 200.0
TRACK_MARGIN_FT = 160.0


class InvalidSpec(ValueError):
    """Scene parameters cannot produce a usable scene."""


@dataclass(frozen=True)
class Segment:
    """`length_ft` of track over which the travel bearing turns by `turn_deg`."""

    length_ft: float
    turn_deg: float = 0.0


@dataclass(frozen=True)
class SceneSpec:
    segments: Tuple[Segment, ...] = (Segment(1990.0),)
    step_ft: float = 10.0
    origin: GeoPoint = DEFAULT_ORIGIN
    start_bearing: float = 0.0
    objects: Mapping[str, int] = field(
        default_factory=lambda: {STOP_SIGN: 5, FIRE_HYDRANT: 2}
    )
    lateral_offset: Tuple[float, float] = (25.0, 40.0)
    min_object_spacing: float = DEFAULT_MIN_OBJECT_SPACING
    bearing_sd: float = 0.0
    position_sd: float = 0.0
    quantize: bool = False
    heading_mode: str = HEADING_DERIVED
    seed: int = 0
    confidence: float = 1.0

    def validate(self) -> None:
        if not self.segments or any(s.length_ft <= 0 for s in self.segments):
            raise InvalidSpec("segments need positive lengths")
        if not self.step_ft > 0:
            raise InvalidSpec("step_ft must be positive")
        if any(count < 0 for count in self.objects.values()):
            raise InvalidSpec("object counts must be non-negative")
        low, high = self.lateral_offset
        if not 0 < low <= high:
            raise InvalidSpec("lateral_offset must satisfy 0 < low <= high")
        if self.bearing_sd < 0 or self.position_sd < 0:
            raise InvalidSpec("noise standard deviations must be non-negative")
        if self.heading_mode not in HEADING_MODES:
            raise InvalidSpec(
                f"heading_mode must be one of {', '.join(HEADING_MODES)}, "
                f"got '{self.heading_mode}'"
            )
        if not 0.0 <= self.confidence <= 1.0:
            raise InvalidSpec("confidence must be between 0 and 1")
        if self.total_length < self.step_ft:
            raise InvalidSpec("track must be at least one step long")

    @property
    def total_length(self) -> float:
        return sum(s.length_ft for s in self.segments)

    @property
    def object_count(self) -> int:
        return sum(self.objects.values())

    @classmethod
    def from_mapping(cls, data: Optional[Mapping[str, Any]]) -> "SceneSpec":
        data = data or {}
        defaults = cls()
        try:
            segments = tuple(
                Segment(float(s["length_ft"]), float(s.get("turn_deg", 0.0)))
                for s in data.get("segments", [])
            ) or defaults.segments
            origin_data = data.get("origin")
            origin = (
                GeoPoint(
                    float(origin_data["latitude"]),
                    float(origin_data["longitude"]),
                    origin_data.get("altitude"),
                )
                if origin_data
                else defaults.origin
            )
            objects = (
                {normalize_object_class(str(k)): int(v) for k, v in data["objects"].items()}
                if "objects" in data
                else dict(defaults.objects)
            )
            low, high = data.get("lateral_offset", defaults.lateral_offset)
            spec = cls(
                segments=segments,
                step_ft=float(data.get("step_ft", defaults.step_ft)),
                origin=origin,
                start_bearing=float(data.get("start_bearing", defaults.start_bearing)),
                objects=objects,
                lateral_offset=(float(low), float(high)),
                min_object_spacing=float(
                    data.get("min_object_spacing", defaults.min_object_spacing)
                ),
                bearing_sd=float(data.get("bearing_sd", defaults.bearing_sd)),
                position_sd=float(data.get("position_sd", defaults.position_sd)),
                quantize=bool(data.get("quantize", defaults.quantize)),
                heading_mode=str(data.get("heading_mode", defaults.heading_mode)),
                seed=int(data.get("seed", defaults.seed)),
                confidence=float(data.get("confidence", defaults.confidence)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, InvalidSpec):
                raise
            raise InvalidSpec(f"bad scene spec: {exc}") from exc
        spec.validate()
        return spec

    def to_dict(self) -> Dict[str, Any]:
        return {
            "segments": [
                {"length_ft": s.length_ft, "turn_deg": s.turn_deg} for s in self.segments
            ],
            "step_ft": self.step_ft,
            "origin": {
                "latitude": self.origin.latitude,
                "longitude": self.origin.longitude,
                "altitude": self.origin.altitude,
            },
            "start_bearing": self.start_bearing,
            "objects": dict(sorted(self.objects.items())),
            "lateral_offset": list(self.lateral_offset),
            "min_object_spacing": self.min_object_spacing,
            "bearing_sd": self.bearing_sd,
            "position_sd": self.position_sd,
            "quantize": self.quantize,
            "heading_mode": self.heading_mode,
            "seed": self.seed,
            "confidence": self.confidence,
        }


def split_object_count(total: int) -> Dict[str, int]:
    """Default class mix for `--objects N`: one hydrant per three objects."""
    if total < 0:
        raise InvalidSpec("object count must be non-negative")
    hydrants = total // 3
    return {STOP_SIGN: total - hydrants, FIRE_HYDRANT: hydrants}


@dataclass(frozen=True)
class PlantedObject:
    object_id: str
    object_class: str
    position: ProjectedPoint
    location: GeoPoint


@dataclass(frozen=True)
class SyntheticScene:
    spec: SceneSpec
    dataset_id: str
    track: Tuple[PhotoCapture, ...]
    true_positions: Tuple[ProjectedPoint, ...]
    # Column-0 bearing the camera really had; the recorded heading may differ.
    true_headings: Tuple[CompassBearing, ...]
    objects: Tuple[PlantedObject, ...]
    imaging: ImagingConfig
    sensor: SensorLayout
    object_widths: Mapping[str, float]
    max_range: float

    def object_width(self, object_class: str) -> float:
        return self.object_widths.get(object_class, FALLBACK_OBJECT_WIDTH)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def _walk(spec: SceneSpec, start: ProjectedPoint) -> Tuple[List[ProjectedPoint], List[float]]:
    """Track points every `step_ft` and the travel bearing into each point."""
    points = [start]
    bearings: List[float] = []
    bearing = spec.start_bearing
    for segment in spec.segments:
        steps = max(1, int(round(segment.length_ft / spec.step_ft)))
        turn_per_step = segment.turn_deg / steps
        for _ in range(steps):
            bearing += turn_per_step
            radians = math.radians(bearing)
            last = points[-1]
            points.append(
                last.offset(spec.step_ft * math.sin(radians), spec.step_ft * math.cos(radians))
            )
            bearings.append(bearing % 360.0)
    return points, [bearings[0]] + bearings


def _round_trip(points: Sequence[ProjectedPoint]) -> Tuple[List[ProjectedPoint], List[GeoPoint]]:
    """Unproject then re-project so ingestion reproduces the same floats."""
    lat, lon = unproject_many([p.easting for p in points], [p.northing for p in points])
    east, north = project_many(lat, lon)
    geo = [GeoPoint(float(a), float(b)) for a, b in zip(lat, lon)]
    return [ProjectedPoint(float(e), float(n)) for e, n in zip(east, north)], geo


def _point_at(
    points: Sequence[ProjectedPoint], step_ft: float, distance: float
) -> Tuple[ProjectedPoint, float]:
    """Point at arc length `distance` along the polyline and its local bearing."""
    index = min(int(distance // step_ft), len(points) - 2)
    a, b = points[index], points[index + 1]
    fraction = (distance - index * step_ft) / step_ft
    point = a.offset(
        (b.easting - a.easting) * fraction, (b.northing - a.northing) * fraction
    )
    return point, bearing_between(a, b).degrees


def _plant_objects(
    spec: SceneSpec, points: Sequence[ProjectedPoint], rng: np.random.Generator
) -> List[Tuple[str, ProjectedPoint]]:
    count = spec.object_count
    if count == 0:
        return []
    length = (len(points) - 1) * spec.step_ft
    usable = length - 2 * TRACK_MARGIN_FT
    if usable <= 0 or usable / count < spec.min_object_spacing:
        raise InvalidSpec(
            f"track of {length:.0f} ft cannot hold {count} objects "
            f"{spec.min_object_spacing:.0f} ft apart"
        )
    slot = usable / count
    jitter = (slot - spec.min_object_spacing) / 2.0
    classes = [name for name in sorted(spec.objects) for _ in range(spec.objects[name])]
    classes = [classes[i] for i in rng.permutation(len(classes))]
    planted = []
    for index, object_class in enumerate(classes):
        along = TRACK_MARGIN_FT + (index + 0.5) * slot + rng.uniform(-jitter, jitter)
        anchor, bearing = _point_at(points, spec.step_ft, along)
        side = 1.0 if rng.random() < 0.5 else -1.0
        offset = rng.uniform(*spec.lateral_offset)
        normal = math.radians(bearing + 90.0 * side)
        planted.append(
            (object_class, anchor.offset(offset * math.sin(normal), offset * math.cos(normal)))
        )
    return planted


def generate(
    spec: SceneSpec,
    *,
    dataset_id: str = "synthetic",
    imaging: Optional[ImagingConfig] = None,
    sensor: Optional[SensorLayout] = None,
    object_widths: Optional[Mapping[str, float]] = None,
    max_range: Optional[float] = None,
) -> SyntheticScene:
    """Build a deterministic scene from `spec.seed`."""
    spec.validate()
    imaging = imaging or ImagingConfig()
    sensor = sensor or SensorLayout()
    widths = dict(object_widths or DEFAULT_OBJECT_WIDTHS)
    max_range = ClusterParams().max_detection_range if max_range is None else max_range
    rng = np.random.default_rng(spec.seed)

    try:
        start = project(spec.origin)
    except ValueError as exc:
        raise InvalidSpec(f"origin cannot be projected: {exc}") from exc
    raw_points, travel = _walk(spec, start)
    if len(raw_points) < 2:
        raise InvalidSpec("track needs at least two captures")
    true_points, true_geo = _round_trip(raw_points)

    if spec.position_sd > 0:
        noise = rng.normal(0.0, spec.position_sd, size=(len(raw_points), 2))
        noisy = [p.offset(float(dx), float(dy)) for p, (dx, dy) in zip(true_points, noise)]
        recorded, recorded_geo = _round_trip(noisy)
    else:
        recorded, recorded_geo = true_points, true_geo

    if spec.heading_mode == HEADING_INERTIAL:
        headings = [CompassBearing(b) for b in travel]
        orientations = list(headings)
    else:
        headings = derive_headings(recorded)
        orientations = derive_headings(true_points)

    altitude = spec.origin.altitude
    track = tuple(
        PhotoCapture(
            capture_id=f"{dataset_id}_{index:05d}",
            dataset_id=dataset_id,
            timestamp=DEFAULT_START_TIME + timedelta(seconds=index),
            position=GeoPoint(geo.latitude, geo.longitude, altitude),
            projected=point,
            heading=heading,
            sequence_index=index,
            image_id=f"{dataset_id}_{index:05d}",
        )
        for index, (point, geo, heading) in enumerate(zip(recorded, recorded_geo, headings))
    )

    planted = _plant_objects(spec, true_points, rng)
    objects = []
    if planted:
        lat, lon = unproject_many(
            [p.easting for _, p in planted], [p.northing for _, p in planted]
        )
        for index, ((object_class, point), a, b) in enumerate(zip(planted, lat, lon)):
            objects.append(
                PlantedObject(
                    f"obj{index + 1:03d}", object_class, point, GeoPoint(float(a), float(b))
                )
            )

    scene = SyntheticScene(
        spec=spec,
        dataset_id=dataset_id,
        track=track,
        true_positions=tuple(true_points),
        true_headings=tuple(orientations),
        objects=tuple(objects),
        imaging=imaging,
        sensor=sensor,
        object_widths=widths,
        max_range=max_range,
    )
    for planted_object in scene.objects:
        sightings = sum(1 for capture in track if _visible(scene, capture, planted_object))
        if sightings < 2:
            raise InvalidSpec(f"{planted_object.object_id} is visible from {sightings} capture(s)")
    logger.info(
        "scene=%s captures=%d objects=%d seed=%d", dataset_id, len(track), len(objects), spec.seed
    )
    return scene


# ---------------------------------------------------------------------------
# Ground-truth detector
# ---------------------------------------------------------------------------


def _true_heading(scene: SyntheticScene, capture: PhotoCapture) -> CompassBearing:
    return scene.true_headings[capture.sequence_index]


def _true_camera(scene: SyntheticScene, capture: PhotoCapture) -> ProjectedPoint:
    return camera_origin(
        scene.true_positions[capture.sequence_index], _true_heading(scene, capture), scene.sensor
    )


def _visible(scene: SyntheticScene, capture: PhotoCapture, obj: PlantedObject) -> bool:
    camera = _true_camera(scene, capture)
    distance = planar_distance(camera, obj.position)
    if distance == 0 or distance > scene.max_range:
        return False
    heading = _true_heading(scene, capture)
    relative = (bearing_between(camera, obj.position).degrees - heading.degrees) % 360.0
    return relative < 90.0 or relative > 270.0


def _render_bbox(
    scene: SyntheticScene,
    column: float,
    distance: float,
    object_class: str,
) -> Optional[Tuple[int, Tuple[float, float, float, float]]]:
    cfg = scene.imaging
    size = cfg.cardinal_width
    cardinal_index = int(column // size) + 1
    center_x = column - size * (cardinal_index - 1)
    angular = 2.0 * math.degrees(math.atan(scene.object_width(object_class) / (2.0 * distance)))
    half = angular / cfg.degrees_per_pixel / 2.0
    half_x = min(half, center_x, size - center_x)
    half_y = min(half, size / 2.0)
    if half_x <= 0 or half_y <= 0:
        return None
    return cardinal_index, (
        max(center_x - half_x, 0.0),
        size / 2.0 - half_y,
        min(center_x + half_x, float(size)),
        size / 2.0 + half_y,
    )


def ground_truth_detect(scene: SyntheticScene, capture: PhotoCapture) -> List[Detection]:
    """Detections an ideal detector reports for every cardinal of `capture`."""
    if not (
        0 <= capture.sequence_index < len(scene.track)
        and scene.track[capture.sequence_index].capture_id == capture.capture_id
    ):
        raise ValueError(f"capture {capture.capture_id} is not part of scene {scene.dataset_id}")
    cfg = scene.imaging
    rng = np.random.default_rng([scene.spec.seed, capture.sequence_index])
    camera = _true_camera(scene, capture)
    detections = []
    for obj in scene.objects:
        noise = rng.normal(0.0, scene.spec.bearing_sd) if scene.spec.bearing_sd > 0 else 0.0
        if not _visible(scene, capture, obj):
            continue
        bearing = CompassBearing(bearing_between(camera, obj.position).degrees + noise)
        column = bearing_column(_true_heading(scene, capture), bearing, cfg)
        if scene.spec.quantize:
            column = (math.floor(column) + 0.5) % cfg.width
        distance = planar_distance(camera, obj.position)
        rendered = _render_bbox(scene, column, distance, obj.object_class)
        if rendered is None:
            logger.debug(
                "capture=%s object=%s sits on a slice edge", capture.capture_id, obj.object_id
            )
            continue
        cardinal_index, bbox = rendered
        detections.append(
            Detection(
                capture_ref=capture.capture_id,
                cardinal_index=cardinal_index,
                object_class=obj.object_class,
                bbox=bbox,
                confidence=scene.spec.confidence,
                slice_size=cfg.cardinal_width,
            )
        )
    return detections


def scene_detections(scene: SyntheticScene) -> Dict[str, List[Detection]]:
    return {capture.capture_id: ground_truth_detect(scene, capture) for capture in scene.track}


# ---------------------------------------------------------------------------
# Scene files
# ---------------------------------------------------------------------------


def track_csv_text(scene: SyntheticScene) -> str:
    """Track in the default ingestion profile, heading column included."""
    lines = ["image_id,timestamp,latitude,longitude,altitude,heading"]
    for capture in scene.track:
        altitude = capture.position.altitude
        lines.append(
            ",".join(
                [
                    capture.image_ref,
                    capture.timestamp.isoformat(),
                    repr(capture.position.latitude),
                    repr(capture.position.longitude),
                    "" if altitude is None else repr(float(altitude)),
                    repr(capture.heading.degrees),
                ]
            )
        )
    return "\n".join(lines) + "\n"


def scene_payload(scene: SyntheticScene) -> Dict[str, Any]:
    return {
        "dataset_id": scene.dataset_id,
        "spec": scene.spec.to_dict(),
        "imaging_width": scene.imaging.width,
        "max_range": scene.max_range,
        "objects": [
            {
                "object_id": obj.object_id,
                "object_class": obj.object_class,
                "easting": obj.position.easting,
                "northing": obj.position.northing,
                "latitude": obj.location.latitude,
                "longitude": obj.location.longitude,
            }
            for obj in scene.objects
        ],
    }


def write_scene(scene: SyntheticScene, paths: DatasetPaths) -> None:
    """Write track.csv, scene.json and ground_truth.json for the mock detector."""
    write_text(paths.track_path, track_csv_text(scene))
    write_json(paths.scene_path, scene_payload(scene))
    write_json(paths.ground_truth_path, dump_ground_truth(scene_detections(scene)))
    logger.info("scene=%s written to %s", scene.dataset_id, paths.dataset_dir)


def load_planted_objects(paths: DatasetPaths) -> List[PlantedObject]:
    data = read_json(paths.scene_path)
    return [
        PlantedObject(
            object_id=item["object_id"],
            object_class=item["object_class"],
            position=ProjectedPoint(item["easting"], item["northing"]),
            location=GeoPoint(item["latitude"], item["longitude"]),
        )
        for item in data.get("objects", [])
    ]


# ---------------------------------------------------------------------------
# Monte-Carlo accuracy experiment
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentResult:
    estimates: Tuple[ObjectEstimate, ...]
    errors_ft: Tuple[float, ...]
    failed: int

    @property
    def mean_sigma_lat(self) -> float:
        return float(np.mean([e.sigma_lat for e in self.estimates])) if self.estimates else 0.0

    @property
    def mean_sigma_lon(self) -> float:
        return float(np.mean([e.sigma_lon for e in self.estimates])) if self.estimates else 0.0

    @property
    def mean_error_ft(self) -> float:
        return float(np.mean(self.errors_ft)) if self.errors_ft else 0.0


def run_accuracy_experiment(
    objects: int = 100,
    *,
    bearing_sd: float = 0.045,
    position_sd: float = 0.3,
    max_range: float = 70.0,
    step_ft: float = 10.0,
    lateral_offset: Tuple[float, float] = (10.0, 25.0),
    quantize: bool = True,
    seed: int = 0,
    imaging: Optional[ImagingConfig] = None,
    params: Optional[ClusterParams] = None,
) -> ExperimentResult:
    """Ensemble of single-object drive-bys seen through a noisy GNSS track.

    Each trial drives a straight line past one object with a capture every
    `step_ft`. The detector looks through the true camera orientation with
    `bearing_sd` degrees of noise; the rays are then rebuilt the way the
    pipeline does, from fixes carrying `position_sd` feet of noise per axis
    and from headings derived from those fixes. Bearings go through the
    pixel grid of `imaging` when `quantize` is set. Trials with fewer than
    two observations or no valid pair count as failed.
    """
    if objects < 1:
        raise InvalidSpec("the experiment needs at least one object")
    imaging = imaging or ImagingConfig()
    params = params or ClusterParams(max_detection_range=max_range)
    rng = np.random.default_rng(seed)
    origin = project(DEFAULT_ORIGIN)
    estimates: List[ObjectEstimate] = []
    errors: List[float] = []
    failed = 0
    span = 2 * int(math.ceil(max_range / step_ft))
    for trial in range(objects):
        travel = rng.uniform(0.0, 360.0)
        offset = rng.uniform(*lateral_offset) * (1.0 if rng.random() < 0.5 else -1.0)
        radians = math.radians(travel)
        normal = math.radians(travel + 90.0)
        target = origin.offset(offset * math.sin(normal), offset * math.cos(normal))
        cameras = [
            origin.offset(along * math.sin(radians), along * math.cos(radians))
            for along in ((index - span / 2) * step_ft for index in range(span + 1))
        ]
        noise = rng.normal(0.0, position_sd, size=(len(cameras), 2))
        fixes = [p.offset(float(dx), float(dy)) for p, (dx, dy) in zip(cameras, noise)]
        orientations = derive_headings(cameras)
        headings = derive_headings(fixes)

        observations = []
        for index, camera in enumerate(cameras):
            if planar_distance(camera, target) > max_range:
                continue
            seen = CompassBearing(
                bearing_between(camera, target).degrees + rng.normal(0.0, bearing_sd)
            )
            column = bearing_column(orientations[index], seen, imaging)
            if quantize:
                column = (math.floor(column) + 0.5) % imaging.width
            observations.append(
                BearingObservation(
                    origin=fixes[index],
                    bearing=pixel_bearing(headings[index], column, imaging),
                    capture_ref=f"mc{trial:04d}_{index:03d}",
                    object_class=STOP_SIGN,
                    confidence=1.0,
                    sequence_index=index,
                )
            )
        if len(observations) < 2:
            logger.debug("trial=%d observations=%d skipped", trial, len(observations))
            failed += 1
            continue
        try:
            estimate = estimate_cluster(
                ClusterGroup(trial + 1, STOP_SIGN, tuple(observations)), params, "monte-carlo"
            )
        except NoValidPairs:
            failed += 1
            continue
        estimates.append(estimate)
        assert estimate.mean_projected is not None
        errors.append(planar_distance(estimate.mean_projected, target))
    logger.info(
        "monte_carlo objects=%d located=%d failed=%d", objects, len(estimates), failed
    )
    return ExperimentResult(tuple(estimates), tuple(errors), failed)
